# %% [markdown]
# # The losses and their gradients
#
# The Zipf term is a KL divergence between the soft label and the softmax
# taken over the non-target logits only. Its gradient is simply
# p_hat - p_tilde on the non-target logits and exactly zero on the target,
# so it reshapes the tail without fighting the cross entropy.

# %%
import numpy as np

from zipfls import ce_loss, logit_rank, ls_loss, nontarget_softmax, total_loss, zipf_loss, zipf_weights

# %%
z = np.array([2.0, 1.0, 0.0, -1.0])
y = 0
tilde = zipf_weights(logit_rank(z, y), 1.0)
print("p_hat  :", np.round(nontarget_softmax(z, y), 6))
print("p_tilde:", np.round(tilde, 6))
res = zipf_loss(z, y, tilde)
print("KL     :", float(res.value))
print("grad   :", np.round(res.grad, 6))

# %% [markdown]
# ## Checking against finite differences

# %%
def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


for name, fn in [
    ("ce", lambda v: ce_loss(v, y)),
    ("ls", lambda v: ls_loss(v, y, 0.1)),
    ("zipf", lambda v: zipf_loss(v, y, tilde)),
    ("ce + zipf", lambda v: total_loss(v, y, tilde, 1.0)),
]:
    gap = np.abs(fn(z).grad - numeric_grad(lambda v: float(fn(v).value), z)).max()
    print(f"{name:10s} max |analytic - numeric| = {gap:.1e}")

# %% [markdown]
# ## Uniform smoothing for comparison
#
# Label smoothing pushes every wrong class toward the same beta/(C-1),
# including the target's gradient. The Zipf term leaves the target alone.

# %%
print("ls grad  :", np.round(ls_loss(z, y, 0.1).grad, 4))
print("ce grad  :", np.round(ce_loss(z, y).grad, 4))
print("zipf grad:", np.round(zipf_loss(z, y, tilde).grad, 4))
