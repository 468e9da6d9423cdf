"""Time the splat kernels under the numba and numpy backends.

Runs the forward render, the pose loss with its analytic gradient, and the
pairwise-distance pass used by pruning on the default desk scene, then
checks that both backends agree.

    python3 benchmarks/bench_render.py --repeat 20
"""
import argparse
import time

import numpy as np

from projectile_splat import _accel
from projectile_splat.gaussians import mean_pairwise_distance
from projectile_splat.render import pose_loss_and_grad, splat_render
from projectile_splat.se3 import Pose, apply_pose
from projectile_splat.simulator import SceneConfig, generate_trajectory, procedural_cloud, scene_cloud


def best_time(fn, repeat):
    fn()  # warm-up, includes JIT compilation on the numba path
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--kernels", type=int, default=96, help="kernels in the rendered sphere")
    ap.add_argument("--prune-kernels", type=int, default=2000, help="kernels for the distance pass")
    args = ap.parse_args()

    cfg = SceneConfig(object={"shape": "sphere", "n": args.kernels, "seed": 0})
    cloud = scene_cloud(cfg)
    cam = cfg.camera
    pose = generate_trajectory(cfg)[10]
    target = splat_render(apply_pose(pose, cloud), cam).rgb
    params = Pose(pose.rotation, pose.translation + [0.02, -0.01, 0.0]).params()
    big = procedural_cloud("box", args.prune_kernels, seed=1)

    cases = {
        "render": lambda: splat_render(apply_pose(pose, cloud), cam),
        "loss+grad": lambda: pose_loss_and_grad(params, cloud, cam, target, 0.2),
        "pair distances": lambda: mean_pairwise_distance(big),
    }
    results, outputs = {}, {}
    for backend in ("numba", "numpy"):
        _accel.set_backend(backend)
        for name, fn in cases.items():
            results[(backend, name)] = best_time(fn, args.repeat)
        outputs[backend] = (splat_render(apply_pose(pose, cloud), cam).rgb,
                            pose_loss_and_grad(params, cloud, cam, target, 0.2)[2])

    print(f"{'kernel':<16}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name in cases:
        a, b = results[("numba", name)], results[("numpy", name)]
        print(f"{name:<16}{1e3 * a:>10.3f}{1e3 * b:>10.3f}{b / a:>8.1f}x")
    img_diff = np.abs(outputs["numba"][0] - outputs["numpy"][0]).max()
    grad_diff = np.abs(outputs["numba"][1] - outputs["numpy"][1]).max()
    print(f"max |image diff| {img_diff:.2e}, max |grad diff| {grad_diff:.2e}")


if __name__ == "__main__":
    main()
