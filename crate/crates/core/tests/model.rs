mod common;

use tkg_core::config::Variant;
use tkg_core::data::Split;
use tkg_core::graph::{Edge, ViewKind, ViewSubgraph};
use tkg_core::model::decode::{contrastive_loss, fuse_scores, joint_loss};
use tkg_core::model::encoders::{attention_layer, decompose, AttentionLayer, EdgeTensors};
use tkg_core::model::init::{snapshot_gcn, InitParams, SnapshotGraph};
use tkg_core::model::nn::{ConvTransE, Modulator};
use tkg_core::model::Model;
use tkg_core::data::{group_snapshots, Quadruple};
use tkg_core::workspace::Workspace;
use tkg_tensor::gradcheck::{check_inputs, check_params};
use tkg_tensor::{seeded, ParamId, ParamStore, Tape, Tensor, RRELU_SLOPE};

use common::toy_model;

type Mat = Vec<Vec<f64>>;

fn rows(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn param(store: &ParamStore, id: ParamId) -> Mat {
    let t = store.value(id);
    if t.ndim() == 1 {
        vec![t.data().to_vec()]
    } else {
        rows(t)
    }
}

fn vecmat(x: &[f64], w: &Mat) -> Vec<f64> {
    (0..w[0].len()).map(|j| x.iter().zip(w).map(|(a, row)| a * row[j]).sum()).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn rrelu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        RRELU_SLOPE * x
    }
}

/// Cross-correlation with zero padding; `kernel` is `[out][in][k]` flattened.
fn conv(input: &[Vec<f64>], kernel: &[f64], bias: &[f64], out_ch: usize, k: usize) -> Mat {
    let (in_ch, w) = (input.len(), input[0].len());
    let pad = (k - 1) / 2;
    (0..out_ch)
        .map(|c| {
            (0..w)
                .map(|j| {
                    let mut acc = bias[c];
                    for i in 0..in_ch {
                        for m in 0..k {
                            let pos = j as isize + m as isize - pad as isize;
                            if pos >= 0 && (pos as usize) < w {
                                acc += kernel[(c * in_ch + i) * k + m] * input[i][pos as usize];
                            }
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn random(shape: Vec<usize>, seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut seeded(seed))
}

#[test]
fn conv_decoder_matches_dense_reference() {
    let (d, c, k, b, n) = (5, 3, 3, 2, 4);
    let mut store = ParamStore::new();
    let dec = ConvTransE::register(&mut store, "dec", d, c, k, &mut seeded(1)).unwrap();
    store.value_mut(dec.kernel_bias).data_mut().copy_from_slice(&[0.1, -0.2, 0.05]);
    store.value_mut(dec.proj_bias).data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.01 * i as f64);
    let (a, bb, table) = (random(vec![b, d], 2), random(vec![b, d], 3), random(vec![n, d], 4));

    let tape = Tape::new();
    let scores = dec
        .score(
            &tape,
            &store,
            &tape.constant(a.clone()),
            &tape.constant(bb.clone()),
            &tape.constant(table.clone()),
            0.5,
            false,
            &mut seeded(0),
        )
        .unwrap()
        .value();
    assert_eq!(scores.shape(), [b, n]);

    let kernel = store.value(dec.kernel).data().to_vec();
    let kb = store.value(dec.kernel_bias).data().to_vec();
    let proj = param(&store, dec.proj);
    let pb = store.value(dec.proj_bias).data().to_vec();
    for row in 0..b {
        let features = conv(&[a.row(row).to_vec(), bb.row(row).to_vec()], &kernel, &kb, c, k);
        let flat: Vec<f64> = features.concat().into_iter().map(|x| x.max(0.0)).collect();
        let q: Vec<f64> = add(&vecmat(&flat, &proj), &pb).into_iter().map(|x| x.max(0.0)).collect();
        for e in 0..n {
            let want: f64 = q.iter().zip(table.row(e)).map(|(x, y)| x * y).sum();
            assert!((scores.row(row)[e] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_decoder_gives_uniform_scores() {
    let mut store = ParamStore::new();
    let dec = ConvTransE::register(&mut store, "dec", 4, 2, 3, &mut seeded(1)).unwrap();
    store.value_mut(dec.kernel).fill(0.0);
    let tape = Tape::new();
    let s = dec
        .score(
            &tape,
            &store,
            &tape.constant(random(vec![1, 4], 1)),
            &tape.constant(random(vec![1, 4], 2)),
            &tape.constant(random(vec![5, 4], 3)),
            0.0,
            false,
            &mut seeded(0),
        )
        .unwrap()
        .value();
    assert_eq!(s.shape(), [1, 5]);
    assert!(s.data().iter().all(|&x| x == s.data()[0]));
}

fn toy_view(kind: ViewKind) -> ViewSubgraph {
    let timed = |s, r, o, dt| match kind {
        ViewKind::Dynamics => Edge::timed(s, r, o, dt),
        ViewKind::Invariance => Edge::invariant(s, r, o),
    };
    let edges = vec![
        timed(0, 1, 2, 1),
        timed(1, 0, 2, 2),
        timed(3, 2, 2, 1),
        timed(2, 1, 0, 3),
        timed(4, 0, 1, 2),
        timed(0, 2, 1, 4),
    ];
    ViewSubgraph::new(5, kind, edges)
}

fn attention_reference(store: &ParamStore, layer: &AttentionLayer, e: &Mat, r: &Mat, view: &ViewSubgraph) -> Mat {
    let (wh, wl, wm, ws) = (
        param(store, layer.w_hidden),
        param(store, layer.w_logit),
        param(store, layer.w_msg),
        param(store, layer.w_self),
    );
    let d = e[0].len();
    let mut out: Mat = e.iter().map(|x| vecmat(x, &ws)).collect();
    for node in 0..e.len() {
        let incoming = view.in_edges(node as u32);
        if incoming.is_empty() {
            continue;
        }
        let logits: Vec<f64> = incoming
            .iter()
            .map(|edge| {
                let input = [&e[edge.subject as usize][..], &r[edge.relation as usize], &e[node]].concat();
                let hidden: Vec<f64> = vecmat(&input, &wh).into_iter().map(rrelu).collect();
                vecmat(&hidden, &wl)[0].clamp(-50.0, 50.0)
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for (edge, l) in incoming.iter().zip(&logits) {
            let theta = (l - max).exp() / z;
            let m: Vec<f64> = add(&e[edge.subject as usize], &r[edge.relation as usize])
                .into_iter()
                .map(f64::tanh)
                .collect();
            let msg = vecmat(&m, &wm);
            for j in 0..d {
                out[node][j] += theta * msg[j];
            }
        }
    }
    out.into_iter().map(|row| row.into_iter().map(rrelu).collect()).collect()
}

#[test]
fn attention_layer_matches_dense_reference() {
    let d = 4;
    let mut store = ParamStore::new();
    let layer = AttentionLayer::register(&mut store, "a", d, 3, &mut seeded(6)).unwrap();
    let (e, r) = (random(vec![5, d], 7), random(vec![3, d], 8));
    let view = toy_view(ViewKind::Invariance);
    let edges = EdgeTensors::from_view(&view).unwrap();
    let tape = Tape::new();
    let out = attention_layer(&tape, &store, &layer, &tape.constant(e.clone()), &tape.constant(r.clone()), &edges, None)
        .unwrap();
    let want = attention_reference(&store, &layer, &rows(&e), &rows(&r), &view);
    let got = out.entities.value();
    for (i, row) in want.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((got.row(i)[j] - v).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_weights_normalize_per_target() {
    let d = 4;
    let mut store = ParamStore::new();
    let layer = AttentionLayer::register(&mut store, "a", d, 4, &mut seeded(6)).unwrap();
    let view = toy_view(ViewKind::Dynamics);
    let edges = EdgeTensors::from_view(&view).unwrap();
    let tape = Tape::new();
    let time = tape.constant(random(vec![edges.len(), d], 3));
    let out = attention_layer(
        &tape,
        &store,
        &layer,
        &tape.constant(random(vec![5, d], 1)),
        &tape.constant(random(vec![3, d], 2)),
        &edges,
        Some(&time),
    )
    .unwrap();
    let theta = out.attention.unwrap().value();
    let mut sums = [0.0; 5];
    for (w, &dst) in theta.data().iter().zip(edges.dst.iter()) {
        sums[dst] += w;
    }
    for node in view.targets() {
        assert!((sums[node as usize] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn encoders_ignore_edge_order() {
    let d = 4;
    let mut store = ParamStore::new();
    let layer = AttentionLayer::register(&mut store, "a", d, 3, &mut seeded(6)).unwrap();
    let (e, r) = (random(vec![5, d], 1), random(vec![3, d], 2));
    let view = toy_view(ViewKind::Invariance);
    let mut reversed = view.edges().to_vec();
    reversed.reverse();
    let shuffled = ViewSubgraph::new(5, ViewKind::Invariance, reversed);
    let run = |v: &ViewSubgraph| {
        let tape = Tape::new();
        let edges = EdgeTensors::from_view(v).unwrap();
        let out = attention_layer(&tape, &store, &layer, &tape.constant(e.clone()), &tape.constant(r.clone()), &edges, None)
            .unwrap();
        out.entities.value().data().to_vec()
    };
    assert_eq!(run(&view), run(&shuffled));

    // edges listed in any order produce the same snapshot graph
    let q = Quadruple::new;
    let facts = vec![q(0, 0, 1, 2), q(2, 1, 1, 2), q(3, 0, 4, 2), q(1, 2, 0, 2)];
    let mut rev = facts.clone();
    rev.reverse();
    let (ga, gb) = (
        SnapshotGraph::new(&group_snapshots(&facts)[0], 3).unwrap(),
        SnapshotGraph::new(&group_snapshots(&rev)[0], 3).unwrap(),
    );
    assert_eq!((ga.src.clone(), ga.rel.clone(), ga.dst.clone()), (gb.src, gb.rel, gb.dst));
}

#[test]
fn snapshot_gcn_matches_dense_reference() {
    let (d, k) = (4, 3);
    let mut store = ParamStore::new();
    let p = InitParams::register(&mut store, d, 1, k, &mut seeded(12)).unwrap();
    let q = Quadruple::new;
    let facts = vec![q(0, 0, 1, 2), q(2, 1, 1, 2), q(3, 0, 4, 2), q(1, 2, 0, 2)];
    let graph = SnapshotGraph::new(&group_snapshots(&facts)[0], 3).unwrap();
    let (e, r) = (random(vec![5, d], 13), random(vec![6, d], 14));
    let tape = Tape::new();
    let got = snapshot_gcn(&tape, &store, &p.layers, &graph, &tape.constant(e.clone()), &tape.constant(r.clone()))
        .unwrap()
        .value();

    let layer = &p.layers[0];
    let kernel = store.value(layer.compose.kernel).data().to_vec();
    let bias = store.value(layer.compose.bias).data().to_vec();
    let (proj, wm, ws) = (param(&store, layer.compose.proj), param(&store, layer.w_msg), param(&store, layer.w_self));
    let (e, r) = (rows(&e), rows(&r));
    // augmented edges and in-degrees, recomputed from the facts
    let mut edges: Vec<(usize, usize, usize)> = facts
        .iter()
        .flat_map(|f| {
            let (s, r, o) = (f.subject as usize, f.relation as usize, f.object as usize);
            [(s, r, o), (o, r + 3, s)]
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let mut out: Mat = e.iter().map(|x| vecmat(x, &ws)).collect();
    for &(s, rel, o) in &edges {
        let c_o = edges.iter().filter(|x| x.2 == o).count() as f64;
        let mixed = conv(&[e[s].clone(), r[rel].clone()], &kernel, &bias, 2, k).concat();
        let msg = vecmat(&vecmat(&mixed, &proj), &wm);
        for j in 0..d {
            out[o][j] += msg[j] / c_o;
        }
    }
    for (i, row) in out.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((got.row(i)[j] - rrelu(*v)).abs() < 1e-12);
        }
    }
}

#[test]
fn decomposition_is_identity_for_zero_gate() {
    let mut store = ParamStore::new();
    let g = Modulator::register(&mut store, "g", 4, 4, &mut seeded(1)).unwrap();
    store.value_mut(g.w_out).fill(0.0);
    let x = random(vec![3, 4], 9);
    let tape = Tape::new();
    let out = decompose(&tape, &store, &g, &tape.constant(x.clone()), 0.0, false, &mut seeded(0)).unwrap();
    assert_eq!(*out.value(), x);
}

#[test]
fn contrastive_loss_cases() {
    let tape = Tape::new();
    let one = tape.constant(Tensor::from_rows(&[vec![0.6, 0.8]]).unwrap());
    assert_eq!(contrastive_loss(&one, &one, 0.3).unwrap().item(), 0.0);
    assert!(contrastive_loss(&one, &one, 0.0).is_err());

    let eye = tape.constant(Tensor::eye(2));
    let per_direction = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
    assert!((per_direction - 0.3133).abs() < 1e-4);
    let loss = contrastive_loss(&eye, &eye, 1.0).unwrap().item();
    assert!((loss - 2.0 * per_direction).abs() < 1e-12);

    let (a, b) = (tape.constant(random(vec![4, 8], 1)), tape.constant(random(vec![4, 8], 2)));
    let ab = contrastive_loss(&a, &b, 0.5).unwrap().item();
    let ba = contrastive_loss(&b, &a, 0.5).unwrap().item();
    assert!((ab - ba).abs() < 1e-12);
    assert!(ab > 0.0);
}

#[test]
fn contrastive_loss_gradient() {
    let inputs = [random(vec![4, 8], 5), random(vec![4, 8], 6)];
    let report = check_inputs(&inputs, 1e-4, |_, v| {
        let a = v[0].l2_normalize_rows(1e-12)?;
        let b = v[1].l2_normalize_rows(1e-12)?;
        contrastive_loss(&a, &b, 0.3).map_err(|e| match e {
            tkg_core::CoreError::Tensor(t) => t,
            other => panic!("{other}"),
        })
    })
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn fusion_promotes_entity_ranked_lower_in_each_view() {
    // candidates: member of parliament, governor, employee, labor union,
    // administrative body, citizen, company owner, indigenous people, villager
    let f_d = vec![5.1521, 5.1514, 5.1435, 4.4350, 4.3371, 4.0889, 3.2, 3.1, 3.0];
    let f_i = vec![3.9577, 3.8303, 4.3710, 3.5522, 3.3, 4.6465, 4.4339, 4.4003, 4.2844];
    let tape = Tape::new();
    let (d, i) = (
        tape.constant(Tensor::new(vec![1, 9], f_d.clone()).unwrap()),
        tape.constant(Tensor::new(vec![1, 9], f_i.clone()).unwrap()),
    );
    let fused = fuse_scores(&d, &i).unwrap().value();
    assert_eq!(*fused, *fuse_scores(&i, &d).unwrap().value());
    let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    let rank = |v: &[f64], g: usize| 1 + v.iter().filter(|&&x| x > v[g]).count();
    assert_eq!(rank(&f_d, 2), 3);
    assert_eq!(rank(&f_i, 2), 4);
    assert_eq!(argmax(fused.data()), 2);
    assert!((fused.data()[2] - 9.5145).abs() < 1e-9);
    let top: Vec<f64> = [0, 1, 5, 3].iter().map(|&k| fused.data()[k]).collect();
    for (got, want) in top.iter().zip([9.1098, 8.9817, 8.7354, 7.9872]) {
        assert!((got - want).abs() < 1e-9);
    }
    let short = tape.constant(Tensor::zeros(vec![1, 3]));
    assert!(fuse_scores(&d, &short).is_err());
}

#[test]
fn joint_loss_matches_hand_computation() {
    let tape = Tape::new();
    let ent = Tensor::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.0, -1.0, 3.0]]).unwrap();
    let rel = Tensor::from_rows(&[vec![0.3, 0.1], vec![2.0, -2.0]]).unwrap();
    let ce = |t: &Tensor, targets: &[usize]| -> f64 {
        targets
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let row = t.row(i);
                let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
                lse - row[g]
            })
            .sum::<f64>()
            / targets.len() as f64
    };
    let (alpha, mu, align) = (0.7, 0.2, 1.3);
    let terms = joint_loss(
        &tape.constant(ent.clone()),
        &[1, 2],
        &tape.constant(rel.clone()),
        &[0, 1],
        Some(tape.constant(Tensor::scalar(align))),
        alpha,
        mu,
    )
    .unwrap();
    let want = alpha * ce(&ent, &[1, 2]) + (1.0 - alpha) * ce(&rel, &[0, 1]) + mu * align;
    assert!((terms.total.item() - want).abs() < 1e-12);

    let only_entity = joint_loss(&tape.constant(ent.clone()), &[1, 2], &tape.constant(rel.clone()), &[0, 1], None, 1.0, 0.0)
        .unwrap();
    assert!((only_entity.total.item() - ce(&ent, &[1, 2])).abs() < 1e-12);
    let no_align = joint_loss(
        &tape.constant(ent.clone()),
        &[1, 2],
        &tape.constant(rel.clone()),
        &[0, 1],
        Some(tape.constant(Tensor::scalar(align))),
        alpha,
        0.0,
    )
    .unwrap();
    assert_eq!(no_align.total.item(), no_align.tkg.item());
    assert!(joint_loss(&tape.constant(ent), &[1, 2], &tape.constant(rel), &[0, 1], None, 1.5, 0.0).is_err());
}

#[test]
fn end_to_end_loss_gradient_matches_finite_differences() {
    for variant in ["full", "ent-decomp+cos-te"] {
        let (ws, model, store, settings) = toy_model(variant);
        let step = ws.step(Split::Train, 3).unwrap();
        let history = ws.history_graphs(&step);
        assert_eq!(history.len(), 2);
        let batch = Workspace::batch(&step, &history, true);
        assert!(!batch.invariance.is_empty() && !batch.dynamics.is_empty());
        let report = check_params(&store, 1e-4, None, |tape, s| {
            let out = model.forward(tape, s, &settings, &batch, false, &mut seeded(0)).unwrap();
            assert!(out.alignment.is_some());
            Ok(model.loss(&settings, &out, &batch).unwrap().total)
        })
        .unwrap();
        assert!(report.passes(1e-4), "{variant}: {report:?}");
    }
}

#[test]
fn disabled_view_parameters_do_not_affect_scores() {
    let (ws, model, store, settings) = toy_model("no-inv");
    let step = ws.step(Split::Valid, 4).unwrap();
    let history = ws.history_graphs(&step);
    let batch = Workspace::batch(&step, &history, false);
    let logits = |s: &ParamStore| {
        let tape = Tape::new();
        let out = model.forward(&tape, s, &settings, &batch, false, &mut seeded(0)).unwrap();
        assert!(out.invariance.is_none() && out.alignment.is_none());
        out.entity_logits.value().data().to_vec()
    };
    let mut perturbed = store.clone();
    for (_, p) in perturbed.iter_mut() {
        if p.name.starts_with("inv.") {
            p.value.fill(0.37);
        }
    }
    assert_eq!(logits(&store), logits(&perturbed));
    assert!("no-inv+no-dyn".parse::<Variant>().is_err());
}

#[test]
fn checkpoints_need_matching_shapes() {
    let (_, model, store, _) = toy_model("full");
    assert!(Model::attach(model.arch.clone(), &store).is_ok());
    let mut wider = model.arch.clone();
    wider.dim += 1;
    let err = Model::attach(wider, &store).unwrap_err();
    assert!(matches!(err, tkg_core::CoreError::Incompatible(_)));
}
