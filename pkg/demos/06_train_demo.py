"""Train the bundled demo net on the synthetic bright-square task: proof
that the blocks, gradients, and update rule work together end to end."""

from importlib import resources

from fastblocks.config import load_model_config
from fastblocks.model import run_demo_train, synthetic_dataset


def main() -> None:
    graph = load_model_config(
        resources.files("fastblocks").joinpath("configs", "demo-fasternet-nam.cfg")
    )
    print(f"model: {graph.name}, input {graph.input_shape}")

    # The task: class 1 images carry a bright centered square, class 0 are
    # plain noise. Linearly separable enough that loss should fall fast.
    x, labels = synthetic_dataset(graph.input_shape, n_samples=8, seed=0)
    print(f"sample batch {x.shape}, labels {labels.tolist()}")

    # Full-batch gradient descent, nothing fancy; 40 steps is plenty to see
    # the trend (the acceptance run does 200 and reaches a tiny loss).
    log = run_demo_train(graph, seed=7, steps=40, lr=0.05)
    for record in log[::5]:
        print(f"  step {record.step:>3d}  loss {record.loss:.4f}")
    first, last = log[0], log[-1]
    print(f"loss {first.loss:.4f} -> {last.loss:.4f} "
          f"({last.loss / first.loss * 100:.1f}% of the initial value)")

    # Identical arguments give an identical trajectory, bit for bit.
    rerun = run_demo_train(graph, seed=7, steps=40, lr=0.05)
    print(f"re-run reproduces the trajectory exactly: "
          f"{all(a.loss == b.loss for a, b in zip(log, rerun))}")


if __name__ == "__main__":
    main()
