use super::*;
use crate::lstm_ae::{LayerSpec, ModelParams};
use crate::model::ParamSet;
use crate::rng::{stream, Stream};

fn cid(id: usize) -> Option<ContentId> {
    Some(ContentId::new(id, 4).unwrap())
}

fn clients(n: usize, seed: u64) -> Vec<ClientState<ModelParams>> {
    let spec = LayerSpec::new(4, vec![6, 4]).unwrap();
    let init = ModelParams::init(&spec, &mut stream(seed, Stream::Init));
    (0..n)
        .map(|i| {
            let data: Vec<Vec<Option<ContentId>>> = (0..20)
                .map(|j| {
                    (0..4)
                        .map(|t| {
                            if (i + j + t) % 3 == 0 {
                                None
                            } else {
                                cid((i + t) % 4 + 1)
                            }
                        })
                        .collect()
                })
                .collect();
            ClientState::new(
                i as u32,
                init.clone(),
                data,
                stream(seed, Stream::ClientDropout(i as u32)),
            )
            .unwrap()
        })
        .collect()
}

fn cfg(rounds: usize, aggregation: Option<AggregationScheme>, sample_k: usize) -> RunConfig {
    RunConfig {
        rounds,
        epochs: 3,
        batch: 4,
        settings: TrainSettings {
            lr: 1e-2,
            dropout: 0.2,
            clip_norm: f64::INFINITY,
        },
        sample_k,
        aggregation,
        weighting: LossWeighting::Proportional,
        eval_every: 1,
    }
}

fn run(c: &mut [ClientState<ModelParams>], cfg: &RunConfig, seed: u64) -> Vec<RoundReport> {
    let mut s = stream(seed, Stream::Sampler);
    run_training(c, cfg, &Evaluation::default(), &mut s, |_, _| Ok(())).unwrap()
}

#[test]
fn average_loss_is_mean_of_log() {
    let mut c = clients(1, 1);
    let settings = cfg(1, None, 1).settings;
    let one = local_train_round(&mut c[0], 1, 4, &settings).unwrap();
    assert_eq!(one, c[0].loss_log[0]);
    let four = local_train_round(&mut c[0], 4, 4, &settings).unwrap();
    assert_eq!(c[0].loss_log.len(), 4);
    assert!((four - c[0].loss_log.iter().sum::<f64>() / 4.0).abs() < 1e-15);
    assert!(local_train_round(&mut c[0], 0, 4, &settings).is_err());
}

#[test]
fn local_round_is_deterministic() {
    let (mut a, mut b) = (clients(1, 2), clients(1, 2));
    let s = cfg(1, None, 1).settings;
    assert_eq!(
        local_train_round(&mut a[0], 3, 4, &s).unwrap(),
        local_train_round(&mut b[0], 3, 4, &s).unwrap()
    );
    assert_eq!(a[0].params, b[0].params);
}

#[test]
fn sampling_contract() {
    let mut r = stream(3, Stream::Sampler);
    assert_eq!(sample_clients(5, 5, &mut r).unwrap(), vec![0, 1, 2, 3, 4]);
    assert!(sample_clients(5, 0, &mut r).is_err());
    assert!(sample_clients(5, 6, &mut r).is_err());
    let a = sample_clients(10, 3, &mut stream(9, Stream::Sampler)).unwrap();
    let b = sample_clients(10, 3, &mut stream(9, Stream::Sampler)).unwrap();
    assert_eq!(a, b);

    let mut counts = [0usize; 4];
    let draws = 100_000;
    for _ in 0..draws {
        counts[sample_clients(4, 1, &mut r).unwrap()[0]] += 1;
    }
    for c in counts {
        assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01);
    }
}

#[test]
fn zero_rounds_is_a_no_op() {
    let mut c = clients(2, 4);
    let before = c[0].params.clone();
    assert!(run(&mut c, &cfg(0, Some(AggregationScheme::FedAvg), 2), 4).is_empty());
    assert_eq!(c[0].params, before);
}

#[test]
fn broadcast_synchronizes_all_clients() {
    let mut c = clients(4, 5);
    let mut s = stream(5, Stream::Sampler);
    let reports = run_training(
        &mut c,
        &cfg(3, Some(AggregationScheme::FedLwa), 2),
        &Evaluation::default(),
        &mut s,
        |_, cl: &[ClientState<ModelParams>]| {
            assert!(cl.iter().all(|x| x.params == cl[0].params));
            Ok(())
        },
    )
    .unwrap();
    for r in &reports {
        let sampled: Vec<_> = r.clients.iter().filter(|c| c.sampled).collect();
        assert_eq!(sampled.len(), 2);
        let g: f64 = sampled.iter().map(|c| c.gamma.unwrap()).sum();
        assert!((g - 1.0).abs() < 1e-9);
    }
}

#[test]
fn full_run_is_deterministic() {
    let config = cfg(3, Some(AggregationScheme::FedAvg), 2);
    let (mut a, mut b) = (clients(3, 6), clients(3, 6));
    assert_eq!(run(&mut a, &config, 6), run(&mut b, &config, 6));
    assert_eq!(a[0].params, b[0].params);
}

#[test]
fn bytes_follow_closed_form() {
    let mut c = clients(3, 7);
    let p = c[0].params.param_count() as u64;
    let r = run(&mut c, &cfg(4, Some(AggregationScheme::FedLwa), 2), 7);
    assert_eq!(r.last().unwrap().bytes_cum, comm_accounting(4, 3, 2, p, true));
    let mut c = clients(3, 7);
    let r = run(&mut c, &cfg(2, None, 3), 7);
    assert_eq!(r.last().unwrap().bytes_cum, 0);
}

#[test]
fn disabled_aggregation_equals_independent_training() {
    let config = cfg(3, None, 2);
    let mut fed = clients(2, 8);
    run(&mut fed, &config, 8);
    let mut solo = clients(2, 8);
    for c in solo.iter_mut() {
        for _ in 0..3 {
            local_train_round(c, config.epochs, config.batch, &config.settings).unwrap();
        }
    }
    for (a, b) in fed.iter().zip(&solo) {
        assert_eq!(a.params, b.params);
    }
}
