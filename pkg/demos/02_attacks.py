"""
Worst-case perturbations
========================

For linear models the inner maximization has a closed form: push the input
along the dual direction of ``w`` with the sign that hurts the most. Iterative
attacks recover the same point.
"""

import numpy as np

from decadv.model import LossModel
from decadv.perturb import PerturbationSpec, closed_form_max, fgm, fgsm, pgd

rng = np.random.default_rng(0)
model = LossModel("logistic", 2)
w = np.array([1.0, -2.0])
x = rng.standard_normal((5, 2))
y = np.array([1.0, -1.0, 1.0, 1.0, -1.0])

for p in (2, np.inf):
    spec = PerturbationSpec(p, 0.3)
    exact = closed_form_max(model, w, x, y, spec)
    iterative = pgd(model, w, x, y, PerturbationSpec(p, 0.3, "pgd", pgd_steps=50), rng)
    print(f"p={p}: clean loss {model.loss(w, x, y).mean():.4f}, "
          f"closed form {model.loss(w, x + exact, y).mean():.4f}, "
          f"PGD {model.loss(w, x + iterative, y).mean():.4f}")

# %% one-step attacks coincide with the closed form for linear logistic models
print("FGM matches:", np.allclose(fgm(model, w, x, y, 0.3), closed_form_max(model, w, x, y, PerturbationSpec(2, 0.3))))
print("FGSM matches:", np.allclose(fgsm(model, w, x, y, 0.3), closed_form_max(model, w, x, y, PerturbationSpec(np.inf, 0.3))))

# %% the gradient at the worst case is a valid gradient of the robust loss
spec = PerturbationSpec(2, 0.3)
xi, yi = x[0], y[0]
robust = lambda v: model.loss(v, xi + closed_form_max(model, v, xi, yi, spec), yi)
h = 1e-6
fd = np.array([(robust(w + h * e) - robust(w - h * e)) / (2 * h) for e in np.eye(2)])
print("finite differences:", fd)
print("gradient at worst case:", model.grad_w(w, xi + closed_form_max(model, w, xi, yi, spec), yi))
