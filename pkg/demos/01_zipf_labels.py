# %% [markdown]
# # From votes to a Zipf soft label
#
# A Zipf label spreads the non-target probability mass by rank: the class
# ranked r gets weight proportional to r^-alpha. The ranks come from the
# network itself, either by sorting its logits or by letting every spatial
# location of a feature map vote for its argmax class.

# %%
import numpy as np

from zipfls import dense_rank, dense_votes, logit_rank, make_distribution, votes_to_ranks, zipf_weights

# %% [markdown]
# ## Ranking by logits
#
# Ties share the mean of the positions they occupy. The target is never ranked.

# %%
logits = np.array([0.0, 3.0, 3.0, 1.0, -2.0])
target = 0
ranks = logit_rank(logits, target)
print("non-target ranks:", ranks)
print("zipf label, alpha=1:", np.round(zipf_weights(ranks, 1.0), 4))

# %% [markdown]
# ## Ranking by dense votes
#
# Two toy logit maps, 2x2 and 4x4 over 6 classes. Each location votes for
# its argmax; votes for the target are thrown away.

# %%
rng = np.random.default_rng(0)
dense1 = rng.normal(size=(2, 2, 6))
dense2 = rng.normal(size=(4, 4, 6))
target = 2
counts = dense_votes([dense1, dense2], target)
print("votes per class:", counts)
print("ranks:", votes_to_ranks(counts, target))

# %% [markdown]
# Classes that received no vote all share rank V+1, where V is the number of
# voted classes. With no votes at all the label falls back to uniform.

# %%
silent = np.zeros((2, 2, 6))
silent[..., target] = 1.0
print("all votes on target ->", zipf_weights(dense_rank([silent], target), 1.0))

# %% [markdown]
# ## Other shapes of prior
#
# The same ranks can feed other decaying priors. Alpha controls how steep the
# Zipf curve is; alpha = 0 is flat.

# %%
ranks = np.arange(1.0, 10.0)
for kind in ("zipf", "constant", "linear", "rand-pareto"):
    print(f"{kind:12s}", np.round(make_distribution(kind, ranks, alpha=1.0, seed=0), 3))
for alpha in (0.0, 0.5, 1.0, 2.0):
    print(f"alpha={alpha:<4}", np.round(zipf_weights(ranks, alpha), 3))
