"""
Does the bonus add signal or noise?
===================================

Take a partly trained click policy, sample 4000 clicks, and resample many
groups of 64. For each group compute the group-centred policy gradient and
project it on the binary gradient direction. The ratio of its mean to its
spread is the signal-to-noise ratio of each reward.
"""
from sweetspot.analysis import snr_report, training_snapshot
from sweetspot.grpo import default_reward_config

samples, _, _ = training_snapshot("click", seed=0, iterations=40, n=4000)
rep = snr_report(samples, default_reward_config("click"), N=64, num_batches=1000, seed=0)
print(f"success rate of the snapshot: {samples.C.mean():.3f}")
print(f"Cov(S, ell.u) = {rep.alignment_cov:.4f}  (the bonus points the same way as success)")
for name in ("binary", "ssl", "continuous"):
    print(f"SNR {name:>10}: {getattr(rep, 'snr_' + name):.3f} +- {getattr(rep, 'half_width_' + name):.3f}")
print(f"raw variance ssl {rep.var_ssl:.3g} vs continuous {rep.var_continuous:.3g}")
# The raw variance is larger for ssl simply because its reward spans
# [0, 1.2] while the field of a mostly-missing policy sits near 0.
