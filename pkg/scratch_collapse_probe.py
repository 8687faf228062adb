"""Probe collapse dynamics: attack separability vs training length."""
import sys
import time

import numpy as np

from rtgnsvdd import evaluation, noise
from rtgnsvdd.config import RunConfig
from rtgnsvdd.data import chronological_split, standardize, synth_generate
from rtgnsvdd.heads import train

batch = int(sys.argv[1]) if len(sys.argv) > 1 else 500
decay = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-5
lr = float(sys.argv[3]) if len(sys.argv) > 3 else 1e-3
head = sys.argv[4] if len(sys.argv) > 4 else "svdd"

cfg = RunConfig(train_batch_size=batch, train_weight_decay=decay, train_lr=lr, head=head)
ds = synth_generate(cfg.synth_config())
splits = chronological_split(ds, cfg.split_spec())
tr, va, te, scaler = standardize(splits.train, splits.val, splits.test)

node_pool = list(range(ds.n_nodes))
for epochs in [1, 5, 15, 30]:
    cfg.train_epochs = epochs
    t0 = time.time()
    res = train(tr, ds.n_nodes, cfg.encoder_config(ds.n_features), cfg.train_config(), scaler)
    sc = evaluation.StreamScorer(res.bundle, ds.n_nodes, tr[0].t)
    sc.warm(tr + va)
    ncfg = noise.NoiseConfig(ratio=0.3, feature_var=5.0, t_start=splits.t_test, t_end=splits.t_max)
    crafted = noise.craft_noise_events(node_pool, noise.noise_count(0.3, te), ncfg,
                                       np.random.default_rng(99), ds.n_features)
    scored = sc.score(noise.inject(te, crafted))
    att = scored.labels == 1
    nrm = scored.labels == 0
    nse = scored.labels == 2
    auc_att = evaluation.roc_auc(scored.s_mu[att | nrm], att[att | nrm])
    auc_att_noise = evaluation.roc_auc(scored.s_mu[att | nse], att[att | nse])
    msg = (f"{head} b={batch} wd={decay:g} lr={lr:g} ep={epochs:2d}: "
           f"AUC(att|norm)={auc_att:.3f} AUC(att|noise)={auc_att_noise:.3f} "
           f"s_mu att/nrm/nse={scored.s_mu[att].mean():.4f}/{scored.s_mu[nrm].mean():.4f}/{scored.s_mu[nse].mean():.4f} "
           f"loss={res.loss_trace[-1][1]:.4f}")
    if scored.s_sigma is not None:
        auc_sig = evaluation.roc_auc(scored.s_sigma[nse | nrm], nse[nse | nrm])
        msg += (f" | AUC(sig)={auc_sig:.3f} "
                f"s_sig att/nrm/nse={scored.s_sigma[att].mean():.3f}/{scored.s_sigma[nrm].mean():.3f}/{scored.s_sigma[nse].mean():.3f}")
    print(msg + f" [{time.time()-t0:.0f}s]", flush=True)
print("DONE")
