"""Scratch probe for the acceptance-scale run (not part of the deliverable)."""
import sys
import time

import numpy as np

from rtgnsvdd import evaluation, noise
from rtgnsvdd.config import RunConfig
from rtgnsvdd.data import chronological_split, standardize, synth_generate
from rtgnsvdd.heads import train

cfg = RunConfig()
ds = synth_generate(cfg.synth_config())
print("events", len(ds.events), "labels", {k.name: v for k, v in ds.label_counts().items()})
splits = chronological_split(ds, cfg.split_spec())
tr, va, te, scaler = standardize(splits.train, splits.val, splits.test)
print("splits", len(tr), len(va), len(te))

results = {}
for head in ["gaussian", "svdd"]:
    cfg.head = head
    t0 = time.time()
    res = train(tr, ds.n_nodes, cfg.encoder_config(ds.n_features), cfg.train_config(), scaler)
    print(f"{head}: 30 epochs in {time.time()-t0:.0f}s; first/last loss "
          f"{res.loss_trace[0]} {res.loss_trace[-1]}", flush=True)
    results[head] = res.bundle

node_pool = list(range(ds.n_nodes))
scorers = {}
for head, bundle in results.items():
    sc = evaluation.StreamScorer(bundle, ds.n_nodes, tr[0].t)
    t0 = time.time()
    sc.warm(tr + va)
    print(f"{head} warm replay {time.time()-t0:.1f}s", flush=True)
    scorers[head] = (sc, sc.snapshot())

# sigma separation at 10% noise (criterion 6 style)
ncfg = noise.NoiseConfig(ratio=0.1, feature_var=5.0, t_start=splits.t_test, t_end=splits.t_max)
rng = np.random.default_rng(123)
crafted = noise.craft_noise_events(node_pool, noise.noise_count(0.10, te), ncfg, rng, ds.n_features)
merged = noise.inject(te, crafted)
sc, snap = scorers["gaussian"]
sc.restore(snap)
t0 = time.time()
scored = sc.score(merged)
print(f"score {len(merged)} events in {time.time()-t0:.1f}s")
is_noise = scored.labels == 2
is_norm = scored.labels == 0
is_att = scored.labels == 1
print("mean s_sigma: noise %.3f normal %.3f attack %.3f"
      % (scored.s_sigma[is_noise].mean(), scored.s_sigma[is_norm].mean(), scored.s_sigma[is_att].mean()))
print("sigma pcts noise", np.percentile(scored.s_sigma[is_noise], [10, 50, 90]).round(3))
print("sigma pcts normal", np.percentile(scored.s_sigma[is_norm], [10, 50, 90]).round(3))
print("sigma pcts attack", np.percentile(scored.s_sigma[is_att], [10, 50, 90]).round(3))
auc_sigma = evaluation.roc_auc(scored.s_sigma[is_noise | is_norm], is_noise[is_noise | is_norm])
print("AUC(s_sigma: noise vs normal) = %.3f" % auc_sigma)
print("mean s_mu: noise %.3f normal %.3f attack %.3f"
      % (scored.s_mu[is_noise].mean(), scored.s_mu[is_norm].mean(), scored.s_mu[is_att].mean()))
auc_mu_clean = evaluation.roc_auc(scored.s_mu[is_att | is_norm], is_att[is_att | is_norm])
print("AUC(s_mu: attack vs normal only) = %.3f" % auc_mu_clean)

# trend probe: 2 resamples x {10,30,50}%, both models
for head in ["svdd", "gaussian"]:
    sc, snap = scorers[head]
    for pct in [10, 30, 50]:
        aucs = []
        for r in range(2):
            rng = np.random.default_rng((pct, r))
            ncfg = noise.NoiseConfig(ratio=pct / 100, feature_var=5.0,
                                     t_start=splits.t_test, t_end=splits.t_max)
            crafted = noise.craft_noise_events(node_pool, noise.noise_count(pct / 100, te),
                                               ncfg, rng, ds.n_features)
            merged = noise.inject(te, crafted)
            sc.restore(snap)
            scored = sc.score(merged)
            if head == "gaussian":
                grid = np.linspace(0.5, 2.5, 21)
                trial = evaluation.trial_from_scores(scored, grid, pct, r)
            else:
                trial = evaluation.trial_from_scores(scored, [], pct, r)
            aucs.append(trial.mean_auc)
        print(f"{head} pct={pct}: mean auc {np.mean(aucs)*100:.1f} (trials "
              f"{[round(a*100,1) for a in aucs]})", flush=True)
print("DONE")
