"""Check the hand-written gradients, then train one stage on two blobs.

    python demos/02_encoder_training.py
"""

import numpy as np

from hiermerge.encoder import StageConfig, backward, cross_entropy, forward, init_backbone, new_head, predict, train_stage

rng = np.random.default_rng(0)
bb = init_backbone([5, 7, 4], seed=1)
head = new_head(4, 3, seed=1)
X = rng.standard_normal((6, 5))
y = rng.integers(0, 3, 6)

# spot-check one weight against a central difference
g = backward(bb, head, X, y)
W = bb.weights[0]
h = 1e-5
W[2, 3] += h
up = cross_entropy(forward(bb, head, X)[1], y)[0]
W[2, 3] -= 2 * h
down = cross_entropy(forward(bb, head, X)[1], y)[0]
W[2, 3] += h
print(f"dL/dW[2,3]: analytic {g.weights[0][2, 3]:.8f}  numeric {(up - down) / (2 * h):.8f}")

X = np.concatenate([rng.normal(-2, 0.7, (60, 2)), rng.normal(2, 0.7, (60, 2))])
y = np.repeat([0, 1], 60)
cfg = StageConfig(stage=3, num_classes=2, epochs=15, batch_size=16, base_lr=1e-2)
bb2, head2, hist = train_stage(init_backbone([2, 8, 4], seed=0), cfg, X, y, X, y)
for h in hist[::5] + hist[-1:]:
    print(f"epoch {h['epoch']:2d}  train {h['train_loss']:.4f}  val {h['val_loss']:.4f}")
print("train accuracy:", np.mean(predict(bb2, head2, X) == y))
