"""Tour of the tensor engine: forward kernels, backward, gradient checking.

Run:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from faceiq import tensor as T
from faceiq.gradcheck import check_gradients
from faceiq.tensor import Parameter, Tensor

rng = np.random.default_rng(0)

# ---------------------------------------------------------------- attention
# Multi-head scaled dot-product attention over raw (unprojected) Q, K, V.
q = Tensor(rng.normal(size=(2, 8)))
k = Tensor(rng.normal(size=(5, 8)))
v = Tensor(rng.normal(size=(5, 8)))
out = T.scaled_dot_attention(q, k, v, heads=2)
print("attention output shape:", out.shape)

# Each softmax row is a distribution; single-key attention copies the value.
single = T.scaled_dot_attention(q, Tensor(rng.normal(size=(1, 8))),
                                Tensor(np.arange(8.0).reshape(1, 8)), heads=1)
print("single-key attention row:", single.data[0])

# ------------------------------------------------------------------- conv2d
x = Tensor(rng.random((3, 16, 16)))
w = Parameter("demo.conv", rng.normal(size=(4, 3, 3, 3)) * 0.2)
feat = T.conv2d(x, w, stride=2, padding=1)
print("conv output shape:", feat.shape)

# ----------------------------------------------------------------- backward
loss = T.mean_all(T.square(feat))
loss.backward()
print("loss:", float(loss.data), "| grad norm:", np.linalg.norm(w.grad))

# ----------------------------------------------------------- gradient check
# Central finite differences versus the recorded reverse-mode gradients.
w.zero_grad()
err = check_gradients(lambda: T.mean_all(T.square(T.conv2d(x, w, 2, 1))), [w])
print("max relative gradient error:", err)
