"""Static cost analysis of model configs, and the instrumented counter
that keeps the analyzer honest."""

from importlib import resources

import numpy as np

from fastblocks.complexity import analyze_graph, compare_reports
from fastblocks.config import load_model_config, parse_model_config
from fastblocks.model import build_model
from fastblocks.tensor_ops import count_macs


def bundled(name: str):
    return resources.files("fastblocks").joinpath("configs", name)


def main() -> None:
    # Per-layer report for the small bundled demo net.
    graph = load_model_config(bundled("demo-fasternet-nam.cfg"))
    report = analyze_graph(graph)
    print(f"{graph.name}:")
    for row in report.rows:
        shape = "x".join(str(d) for d in row.out_shape)
        print(f"  {row.layer_id:<18s} {row.params:>7,d} params {row.flops:>10,d} flops  -> {shape}")
    print(f"  total: {report.total_params:,d} params, {report.total_flops:,d} flops")

    # The same numbers, measured: run a batch-1 forward pass with the MAC
    # counter active. The static analyzer must agree exactly, not roughly.
    model = build_model(graph, seed=0)
    c, h, w = graph.input_shape
    with count_macs() as counter:
        model.forward(np.random.default_rng(0).standard_normal((1, c, h, w)))
    print(f"  instrumented forward pass: {counter.macs:,d} MACs "
          f"(match: {counter.macs == report.total_flops})")

    # Swapping conv stacks for FasterNet blocks cuts both budgets. The
    # effect is easy to see on a single stage before looking at full nets:
    stage = "input 64 40 40\nconv cin=64 cout=64 k=3 s=1 p=1\nbn c=64\nrelu\n"
    block = "input 64 40 40\nfasternet c=64 cp=16 e=2\n"
    a = analyze_graph(parse_model_config(stage, name="conv stage"))
    b = analyze_graph(parse_model_config(block, name="fasternet stage"))
    print(f"\nconv 3x3 stage : {a.total_params:>7,d} params {a.total_flops:>12,d} flops")
    print(f"fasternet stage: {b.total_params:>7,d} params {b.total_flops:>12,d} flops")

    # And on the bundled full-model configs:
    base = analyze_graph(load_model_config(bundled("yolov5s-like.cfg")))
    for name in ("fasternet-head-like.cfg", "nam-neck-like.cfg", "improved-like.cfg"):
        new = analyze_graph(load_model_config(bundled(name)))
        diff = compare_reports(base, new)
        print(f"\nyolov5s-like -> {name}")
        print(f"  params: {diff.base_params:,d} -> {diff.new_params:,d} "
              f"({diff.param_delta_pct:+.2f}%)")
        print(f"  flops : {diff.base_flops:,d} -> {diff.new_flops:,d} "
              f"({diff.flops_delta_pct:+.2f}%)")


if __name__ == "__main__":
    main()
