//! Random network generator for property tests and fixtures.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
#[allow(unused_imports)] // needed when std is absent from the graph
use num_traits::Float;

use super::{ComponentKind, ComponentSpec, Endpoint, GainSpec, Link, NetworkSpec, OutputDecl, PortRef, Source};

#[derive(Debug, Clone, Copy)]
pub struct RandomNetworkConfig {
    pub components: usize,
    /// Number of feedback links closed from late outputs onto early inputs.
    /// Zero produces an acyclic network.
    pub feedback_links: usize,
    pub max_gain: f64,
    pub max_outputs: usize,
}

impl Default for RandomNetworkConfig {
    fn default() -> Self {
        Self { components: 6, feedback_links: 0, max_gain: 3.0, max_outputs: 3 }
    }
}

/// Draws a valid network. With `feedback_links > 0` every component after
/// the first consumes an output of its predecessor, so closing a link from
/// the last component onto the first guarantees a cycle.
pub fn random_network<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomNetworkConfig) -> NetworkSpec {
    let n = cfg.components.max(1);
    let mut net = NetworkSpec::default();
    let mut pool: Vec<Endpoint> = Vec::new();
    let mut source_links: Vec<usize> = Vec::new();
    let mut prev_outputs: Vec<PortRef> = Vec::new();

    let fresh_source = |net: &mut NetworkSpec, rng: &mut R| -> String {
        let name = format!("m{}", net.sources.len());
        let src = match rng.random_range(0..6) {
            0 => Source::idler(name.clone()),
            1 => Source::coherent(name.clone(), Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))),
            _ => Source::vacuum(name.clone()),
        };
        net.sources.push(src);
        name
    };

    for i in 0..n {
        let id = format!("c{i}");
        let kind = match rng.random_range(0..4) {
            0 => ComponentKind::Amplifier(if rng.random_bool(0.2) {
                GainSpec::QnDb(rng.random_range(0.0..(2.0 * cfg.max_gain * cfg.max_gain - 1.0).log10() * 10.0))
            } else {
                GainSpec::Amplitude(rng.random_range(1.0..cfg.max_gain.max(1.0 + 1e-9)))
            }),
            1 => ComponentKind::BeamSplitter { t: rng.random_range(0.0..=1.0) },
            2 => ComponentKind::Phase { phi: rng.random_range(-3.5..3.5) },
            _ => ComponentKind::Loss { l: rng.random_range(0.0..=1.0) },
        };
        let inputs = kind.inputs();
        for (j, &port) in inputs.iter().enumerate() {
            let to = PortRef::new(id.clone(), port);
            let chained = j == 0 && cfg.feedback_links > 0 && !prev_outputs.is_empty();
            let from = if chained {
                let pick = prev_outputs.swap_remove(rng.random_range(0..prev_outputs.len()));
                let ep = Endpoint::Port(pick);
                pool.retain(|e| *e != ep);
                ep
            } else if !pool.is_empty() && rng.random_bool(0.6) {
                pool.swap_remove(rng.random_range(0..pool.len()))
            } else {
                let name = fresh_source(&mut net, rng);
                source_links.push(net.links.len());
                Endpoint::Mode(name)
            };
            net.links.push(Link { from, to });
        }
        prev_outputs.clear();
        for &port in kind.outputs() {
            let r = PortRef::new(id.clone(), port);
            prev_outputs.push(r.clone());
            pool.push(Endpoint::Port(r));
        }
        net.components.push(ComponentSpec::new(id, kind));
    }

    // close feedback links: late open outputs onto early source-driven inputs
    let mut closed = 0;
    while closed < cfg.feedback_links && !source_links.is_empty() {
        let late: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, Endpoint::Port(_)))
            .map(|(i, _)| i)
            .collect();
        if late.is_empty() || (closed > 0 && late.len() == 1) {
            break;
        }
        if late.len() == 1 {
            // the loop would swallow the only open port: split it first
            let id = format!("c{}", net.components.len());
            let kind = ComponentKind::BeamSplitter { t: rng.random_range(0.0..=1.0) };
            let from = pool.swap_remove(late[0]);
            net.links.push(Link { from, to: PortRef::new(id.clone(), kind.inputs()[0]) });
            let name = fresh_source(&mut net, rng);
            net.links.push(Link { from: Endpoint::Mode(name), to: PortRef::new(id.clone(), kind.inputs()[1]) });
            for &port in kind.outputs() {
                pool.push(Endpoint::Port(PortRef::new(id.clone(), port)));
            }
            net.components.push(ComponentSpec::new(id, kind));
            continue;
        }
        // prefer the last component's outputs for the first link
        let pick = if closed == 0 { *late.last().unwrap() } else { late[rng.random_range(0..late.len())] };
        let from = pool.swap_remove(pick);
        let target = if closed == 0 { 0 } else { rng.random_range(0..source_links.len()) };
        let li = source_links.remove(target);
        if let Endpoint::Mode(name) = &net.links[li].from {
            let name = name.clone();
            net.sources.retain(|s| s.mode.name != name);
        }
        net.links[li].from = from;
        closed += 1;
    }

    let mut open: Vec<PortRef> = pool
        .into_iter()
        .filter_map(|e| match e {
            Endpoint::Port(p) => Some(p),
            Endpoint::Mode(_) => None,
        })
        .collect();
    let wanted = rng.random_range(1..=cfg.max_outputs.max(1)).min(open.len());
    for k in 0..wanted {
        let p = open.swap_remove(rng.random_range(0..open.len()));
        net.outputs.push(OutputDecl { name: format!("o{k}"), port: p });
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_networks_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..300 {
            let cfg = RandomNetworkConfig { components: 1 + i % 12, feedback_links: i % 3, ..Default::default() };
            let net = random_network(&mut rng, &cfg);
            net.validate().unwrap();
            assert!(!net.outputs.is_empty());
        }
    }

    #[test]
    fn feedback_links_create_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cyclic = 0;
        for _ in 0..100 {
            let cfg = RandomNetworkConfig { components: 5, feedback_links: 1, ..Default::default() };
            let net = random_network(&mut rng, &cfg);
            if let Ok(r) = super::super::solve(&net) {
                if r.loop_gain > 0.0 {
                    cyclic += 1;
                }
            }
        }
        // loops can be cut structurally by T = 1 or L = 1, never in practice
        assert!(cyclic > 90, "{cyclic}");
    }
}
