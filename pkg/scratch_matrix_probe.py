"""Parameter study: per-model attack-vs-normal and attack-vs-noise AUCs."""
import sys

import numpy as np

from rtgnsvdd import evaluation, noise
from rtgnsvdd.config import RunConfig
from rtgnsvdd.data import chronological_split, standardize, synth_generate
from rtgnsvdd.heads import train

exponent, gap, d_hidden = float(sys.argv[1]), float(sys.argv[2]), int(sys.argv[3])

cfg = RunConfig(train_batch_size=500, train_weight_decay=1e-5,
                synth_activity_exponent=exponent, synth_attack_burst_gap=gap,
                encoder_d_hidden=d_hidden)
ds = synth_generate(cfg.synth_config())
splits = chronological_split(ds, cfg.split_spec())
tr, va, te, scaler = standardize(splits.train, splits.val, splits.test)
print(f"exp={exponent} gap={gap} dh={d_hidden}", flush=True)

scorers = {}
for head in ["svdd", "gaussian"]:
    cfg.head = head
    res = train(tr, ds.n_nodes, cfg.encoder_config(ds.n_features), cfg.train_config(), scaler)
    sc = evaluation.StreamScorer(res.bundle, ds.n_nodes, tr[0].t)
    sc.warm(tr + va)
    scorers[head] = (sc, sc.snapshot())

grids = {"wide": np.linspace(0.5, 2.5, 21), "tuned": np.linspace(0.8, 1.6, 21)}
for pct in [10, 50]:
    rng = np.random.default_rng((pct, 0))
    ncfg = noise.NoiseConfig(ratio=pct / 100, feature_var=5.0,
                             t_start=splits.t_test, t_end=splits.t_max)
    crafted = noise.craft_noise_events(range(ds.n_nodes), noise.noise_count(pct / 100, te),
                                       ncfg, rng, ds.n_features)
    merged = noise.inject(te, crafted)
    for head in ["svdd", "gaussian"]:
        sc, snap = scorers[head]
        sc.restore(snap)
        scored = sc.score(merged)
        lab = scored.labels
        att, nrm, nse = lab == 1, lab == 0, lab == 2
        a_n = evaluation.roc_auc(scored.s_mu[att | nrm], att[att | nrm])
        a_z = evaluation.roc_auc(scored.s_mu[att | nse], att[att | nse])
        comb = evaluation.roc_auc(scored.s_mu, att)
        line = (f"  pct={pct} {head}: A|n={a_n:.3f} A|z={a_z:.3f} raw_comb={comb*100:.1f}")
        if head == "gaussian":
            sig_auc = evaluation.roc_auc(scored.s_sigma[nse | nrm], nse[nse | nrm])
            for gname, grid in grids.items():
                t = evaluation.trial_from_scores(scored, grid, pct, 0)
                line += f" rtgn[{gname}]={t.mean_auc*100:.1f}"
            line += f" sigAUC={sig_auc:.3f}"
        print(line, flush=True)
print("DONE")
