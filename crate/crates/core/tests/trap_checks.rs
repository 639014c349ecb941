use gwrw_core::offspring::{extinction_probability, h_law, height_tail, OffspringLaw};
use gwrw_core::rng;
use gwrw_core::stats::{chi_square, ks_distance};
use gwrw_core::trap::{
    escape_probabilities, excursion_moments, grow_h_tree, mean_excursion_time, GeigerSampler,
    Network, SInfinitySampler, TrapTree, TrapWalk,
};
use nalgebra::{DMatrix, DVector};

fn reference() -> OffspringLaw {
    OffspringLaw::new(vec![0.2, 0.0, 0.8]).unwrap()
}

fn geiger(law: &OffspringLaw) -> GeigerSampler {
    GeigerSampler::new(&h_law(law, extinction_probability(law)), 40)
}

/// `E_start[T_start^+]` by solving for hitting times of `start`.
fn solved_return_time(net: &Network, start: usize) -> f64 {
    let n = net.vertices;
    let mut w = DMatrix::<f64>::zeros(n, n);
    for &(a, b, c) in &net.edges {
        w[(a as usize, b as usize)] += c;
        w[(b as usize, a as usize)] += c;
    }
    let pi: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::from_element(n, 1.0);
    for i in 0..n {
        if i == start {
            rhs[i] = 0.0;
            continue;
        }
        for j in 0..n {
            if j != start {
                m[(i, j)] -= w[(i, j)] / pi[i];
            }
        }
    }
    let hit = m.lu().solve(&rhs).expect("nonsingular");
    1.0 + (0..n)
        .map(|j| w[(start, j)] / pi[start] * hit[j])
        .sum::<f64>()
}

#[test]
fn return_time_identity_by_linear_solve() {
    let s = geiger(&reference());
    let mut r = rng::stream(11, 0);
    let mut checked = 0;
    while checked < 30 {
        let h = 1 + (rng::uniform(&mut r) * 6.0) as u32;
        let t = s.geiger_tree(h, &mut r);
        if t.len() > 200 {
            continue;
        }
        let net = t.network(5.0, true);
        let solved = solved_return_time(&net, t.delta as usize);
        let identity = 2.0 * net.total_conductance();
        assert!(
            (solved - identity).abs() < 1e-10 * identity,
            "{solved} vs {identity}"
        );

        let c = t.conditioned_conductances(5.0);
        let edges = (0..t.len())
            .filter(|&v| t.parent[v] != u32::MAX)
            .map(|v| (t.parent[v], v as u32, c[v]))
            .collect();
        let cnet = Network {
            vertices: t.len(),
            edges,
        };
        let solved = solved_return_time(&cnet, t.delta as usize);
        let formula = mean_excursion_time(&t.skeleton(5.0), 5.0);
        assert!(
            (solved - formula).abs() < 1e-10 * formula,
            "{solved} vs {formula}"
        );
        checked += 1;
    }
}

#[test]
fn escape_probabilities_by_gambler_ruin_chain() {
    let beta: f64 = 5.0;
    for h in 0..12u32 {
        // States 0 (delta) ..= h+1 (root); edge (i, i+1) has conductance beta^-i.
        let n = h as usize + 2;
        let c = |i: usize| beta.powi(-(i as i32));
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        m[(0, 0)] = 1.0;
        rhs[0] = 1.0;
        m[(n - 1, n - 1)] = 1.0;
        for i in 1..n - 1 {
            let pi = c(i - 1) + c(i);
            m[(i, i)] = 1.0;
            m[(i, i - 1)] = -c(i - 1) / pi;
            m[(i, i + 1)] = -c(i) / pi;
        }
        let harm = m.lu().solve(&rhs).unwrap();
        let (p1, p2) = escape_probabilities(h, beta);
        assert!((p1 - harm[h as usize]).abs() < 1e-12, "h = {h}");
        let p2_chain = if h == 0 { 1.0 } else { 1.0 - harm[1] };
        assert!((p2 - p2_chain).abs() < 1e-12, "h = {h}");
    }
}

#[test]
fn rejection_and_conditioned_excursions_agree() {
    let s = geiger(&reference());
    let mut r = rng::stream(12, 0);
    let t = s.geiger_tree(4, &mut r);
    let plain = TrapWalk::unconditioned(&t, 5.0);
    let cond = TrapWalk::conditioned(&t, 5.0);
    let reps = 100_000;
    let mut rejected = 0u64;
    let mut a = Vec::with_capacity(reps);
    while a.len() < reps {
        match plain.excursion(&mut r) {
            Some(x) => a.push(x as f64),
            None => rejected += 1,
        }
    }
    let b: Vec<f64> = (0..reps)
        .map(|_| cond.return_time(t.delta, &mut r) as f64)
        .collect();
    let d = ks_distance(&a, &b);
    assert!(d < 0.01, "KS {d}");
    let (m1, _) = excursion_moments(&t, 5.0);
    let (ma, sea) = gwrw_core::stats::mean_se(&a);
    assert!((ma - m1).abs() < 4.0 * sea, "{ma} vs {m1}");
    let (_, p2) = escape_probabilities(4, 5.0);
    let total = (reps as u64 + rejected) as f64;
    let rate = rejected as f64 / total;
    let se = (p2 * (1.0 - p2) / total).sqrt();
    assert!((rate - p2).abs() < 4.0 * se, "{rate} vs {p2}");
}

#[test]
fn single_edge_trap_excursion_is_two() {
    let mut r = rng::stream(13, 0);
    let t = TrapTree::from_children(vec![vec![1], vec![]], 0, vec![1, 0]);
    let walk = TrapWalk::unconditioned(&t, 5.0);
    let mut n = 0;
    while n < 1000 {
        if let Some(x) = walk.excursion(&mut r) {
            assert_eq!(x, 2);
            n += 1;
        }
    }
}

/// Law of the first generation size given height exactly `h`.
fn first_generation_law(hl: &OffspringLaw, h: usize) -> Vec<f64> {
    let tail = height_tail(hl, h + 2);
    let below = |n: usize| 1.0 - tail.values[n];
    let mut p: Vec<f64> = (0..=hl.max_degree())
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            hl.p(k) * (below(h).powi(k as i32) - below(h - 1).powi(k as i32))
        })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

#[test]
fn geiger_first_generation_matches_conditioning() {
    let law = OffspringLaw::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let hl = h_law(&law, extinction_probability(&law));
    let s = GeigerSampler::new(&hl, 10);
    let cdf = hl.cdf();
    let mut r = rng::stream(14, 0);
    for h in [1usize, 2, 3] {
        let law_h = first_generation_law(&hl, h);
        let reps = 100_000;
        let mut geiger_counts = vec![0u64; law_h.len()];
        for _ in 0..reps {
            let t = s.geiger_tree(h as u32, &mut r);
            geiger_counts[t.children[t.bud as usize].len()] += 1;
        }
        let (_, p) = chi_square(&geiger_counts, &law_h);
        assert!(p > 0.001, "geiger h = {h}: p = {p}");

        let mut direct_counts = vec![0u64; law_h.len()];
        let mut accepted = 0;
        while accepted < 20_000 {
            if let Some(t) = grow_h_tree(&cdf, h as u32 + 1, &mut r) {
                if t.height() == h as u32 {
                    let first = t.depth.iter().filter(|&&d| d == 1).count();
                    direct_counts[first] += 1;
                    accepted += 1;
                }
            }
        }
        let (_, p) = chi_square(&direct_counts, &law_h);
        assert!(p > 0.001, "direct h = {h}: p = {p}");
    }
}

#[test]
fn lambda_means_below_bound() {
    let law = reference();
    let q = extinction_probability(&law);
    let s = SInfinitySampler::new(geiger(&law), 5.0, law.pgf_derivative(q));
    for i in 0..=10u32 {
        let mean = (0..4000).map(|j| s.lambda(15, j, i)).sum::<f64>() / 4000.0;
        assert!(
            mean <= s.lambda_bound(i),
            "i = {i}: {mean} vs {}",
            s.lambda_bound(i)
        );
    }
}

#[test]
fn indexed_traps_share_spine_levels_with_s_infinity() {
    let law = reference();
    let q = extinction_probability(&law);
    let s = SInfinitySampler::new(geiger(&law), 5.0, law.pgf_derivative(q));
    for index in 0..50u64 {
        let low = s.geiger.geiger_tree_indexed(6, 21, index).skeleton(5.0);
        let high = s.geiger.geiger_tree_indexed(9, 21, index).skeleton(5.0);
        for i in 1..=6u32 {
            let l = s.lambda(21, index, i);
            assert!(
                (low.lambda[i as usize] - l).abs() <= 1e-12 * l.max(1.0),
                "index {index}, level {i}"
            );
            assert!(
                (high.lambda[i as usize] - l).abs() <= 1e-12 * l.max(1.0),
                "index {index}, level {i}"
            );
        }
    }
}
