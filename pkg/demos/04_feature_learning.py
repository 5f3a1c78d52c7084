"""Unsupervised feature extraction: a convolutional layer learns moving
edges from raw events.

Four shared kernels compete through winner-take-all; each winner's weights
move toward the equilibrium of its normalized input trace.  Training stops
when the moving average of the trace/weight mismatch drops below
threshold.  Kernels are exported as PGM images and CSV grids.
"""

import os
import time

import numpy as np

from spikeflow import (Bar, CameraModel, Kernel, LayerConfig, LayerKind,
                       NetworkConfig, NeuronParams, PlanarMotion, StdpParams,
                       TrainSchedule, build, export_kernels, generate_events,
                       train_layer)

OUT = os.path.join(os.path.dirname(__file__), "out", "kernels")
camera = CameraModel()

print("building the training pool: bars at 4 directions x 2 speeds")
pool = []
for speed in (0.6, 1.0):
    for wx, wy, horiz in [(1, 0, False), (-1, 0, False),
                          (0, 1, True), (0, -1, True)]:
        bar = Bar(width_px=4.0, horizontal=horiz, edge_px=0.0)
        pool.append(generate_events(
            bar, PlanarMotion.from_ventral_flow(wx * speed, wy * speed),
            camera, 400_000, 48, 48))

layers = [LayerConfig(kind=LayerKind.SS_CONV, name="features", r=7, s=1, f=4,
                      plastic=True, neuron=NeuronParams(),
                      stdp=StdpParams(eta=5e-3, l_th=5e-2))]
net = build(NetworkConfig(width=48, height=48, layers=layers, seed=0))

t0 = time.time()
result = train_layer(net, 0, TrainSchedule(pool=pool, max_presentations=120,
                                           seed=7))
l_tail = [l for _, l in result.l_values][-200:]
print(f"trained: converged={result.converged} after {result.presentations} "
      f"presentations, {len(result.l_values)} updates, {time.time()-t0:.0f} s")
print(f"moving-average mismatch L = {np.mean(l_tail):.4f} (threshold 0.05)")

layer = net.layers[0]
print(f"kernel weights span [{layer.k_exc.min():.3f}, {layer.k_exc.max():.3f}] "
      "- naturally inside the [0, 1] equilibrium band")

paths = export_kernels(Kernel(exc=layer.k_exc), layer.tau_ms, OUT, fmt="pgm",
                       prefix="feature")
paths += export_kernels(Kernel(exc=layer.k_exc), layer.tau_ms, OUT, fmt="csv",
                        prefix="feature")
print(f"exported {len(paths)} kernel files to {OUT}")

print("\nchannel-summed kernel silhouettes (rows = y, '#' = strong weight):")
for k in range(4):
    grid = layer.k_exc[k].sum(axis=(2, 3))
    chars = " .:*#"
    scale = grid.max() or 1.0
    print(f" kernel {k}:")
    for row in grid:
        print("   " + "".join(chars[min(4, int(4 * v / scale))] for v in row))
