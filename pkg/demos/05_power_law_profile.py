# %% [markdown]
# # Do softmax tails follow a power law?
#
# Sort each prediction in descending order, average over the test set and
# fit a line in log-log space. A good straight-line fit means the sorted
# probabilities decay like rank^-alpha.

# %%
import numpy as np

from zipfls import TrainConfig, fit_power_law, sorted_profile, sorted_softmax_mean, train
from zipfls.data import normalize
from zipfls.trainer import load_data

# %% [markdown]
# ## Sanity check on an exact power law

# %%
r = np.arange(1, 11, dtype=float)
fit = fit_power_law(r**-1.5 / np.sum(r**-1.5), (1, 10))
print(f"alpha_hat {fit.alpha_hat:.12f}  r2 {fit.r2}")

# %% [markdown]
# ## A briefly trained cross-entropy model

# %%
cfg = TrainConfig(
    seed=1,
    num_classes=10,
    samples_per_class=200,
    test_per_class=50,
    noise=60.0,
    image_size=8,
    pad=1,
    widths=(8, 16, 16),
    epochs=6,
    milestones=(4,),
    lam=0.0,
)
result = train(cfg)
test_set = load_data(cfg)[1]
profile = sorted_softmax_mean(result.model, normalize(test_set.images, result.mean, result.std))
fit = fit_power_law(profile, (2, 10))
print("mean sorted softmax:", np.round(profile.mean_sorted, 4))
print(f"fit over ranks 2..10: alpha_hat {fit.alpha_hat:.2f}, r2 {fit.r2:.3f}")

# %% [markdown]
# `sorted_profile` works on any probability matrix, for instance one from
# another framework.

# %%
print(sorted_profile([[0.1, 0.6, 0.3], [0.2, 0.2, 0.6]]).mean_sorted)
