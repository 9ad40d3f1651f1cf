# %% [markdown]
# # A small CNN with dense logit taps
#
# One forward pass yields the pooled logits used for the loss and two dense
# maps: the shared classifier applied at every location of the last two
# stages. Those maps are what vote for the ranking, so no second pass and
# no teacher network are needed.

# %%
import numpy as np

from zipfls import MiniNet, dense_rank, total_loss, zipf_weights

# %%
model = MiniNet(num_classes=10, widths=(8, 16, 16), seed=0)
x = np.random.default_rng(0).normal(size=(4, 3, 8, 8)).astype(np.float32)
taps = model.forward(x)
print("pooled logits:", taps.pooled_logits.shape)
print("dense1 (last stage):", taps.dense1.shape)
print("dense2 (stage before):", taps.dense2.shape)

# %% [markdown]
# Averaging dense1 over space gives back the pooled logits, because the
# classifier is linear.

# %%
print("max gap:", np.abs(taps.dense1.mean(axis=(1, 2)) - taps.pooled_logits).max())

# %% [markdown]
# ## One training step

# %%
targets = np.array([0, 3, 3, 7])
labels = zipf_weights(dense_rank([taps.dense1, taps.dense2], targets), 1.0)
loss = total_loss(taps.pooled_logits, targets, labels, 1.0)
grads = model.backward(loss.grad / len(targets))
print("loss:", float(loss.value.mean()))
print("passes:", model.forward_calls, "forward,", model.backward_calls, "backward")
print("largest gradient:", max(grads, key=lambda k: np.abs(grads[k]).max()))
