"""Verify every backward pass with central finite differences, then show
the checker catching a deliberately broken gradient."""

import numpy as np

from fastblocks.gradcheck import gradcheck, standard_suite


class DoubledGradient:
    """A y = 3x unit whose backward returns twice the true gradient."""

    name = "sabotaged scale"
    input_shape = (2, 3, 4, 4)

    def forward(self, x):
        return 3.0 * x

    def backward(self, grad_out):
        return 2.0 * 3.0 * grad_out  # wrong on purpose

    def params(self):
        return {}

    def param_grads(self):
        return {}


def main() -> None:
    # The stock suite covers every differentiable unit in the package plus
    # a three-layer composite; each check perturbs inputs and parameters.
    print("standard suite at tolerance 1e-4:")
    for unit in standard_suite(seed=0):
        print(f"  {gradcheck(unit, input_seed=0, tolerance=1e-4)}")

    # A broken backward is flagged immediately: the finite difference sees
    # the true slope, the analytic path reports double.
    report = gradcheck(DoubledGradient(), input_seed=0, tolerance=1e-4)
    print("\nbroken unit:")
    print(f"  {report}")
    print(f"  max relative error {report.max_rel_error:.3f} (expected about 0.5: |6-3|/6)")
    assert not report.passed


if __name__ == "__main__":
    main()
