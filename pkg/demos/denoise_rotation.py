"""Denoise a rotation field sampled on a dense lattice.

The script samples the pure-rotation linear system on a 61x61 lattice,
corrupts it with Gaussian noise, then learns two unit velocity
measurements and rebuilds the field through their gradients.  Expect a
noise reduction around 80%.  Runs in well under a minute.
"""

from pathlib import Path

from koopreg import resolve_config, run_denoise, run_synth

OUT = Path("demo-output/denoise")


def main():
    synth = resolve_config(
        "synth",
        None,
        {"system": "lin-imaginary", "out": str(OUT / "data"), "seed": 0},
    )
    run_synth(synth)

    denoise = resolve_config(
        "denoise",
        None,
        {
            "noisy": str(OUT / "data" / "noisy.csv"),
            "clean": str(OUT / "data" / "clean.csv"),
            "out": str(OUT),
        },
    )
    _, report = run_denoise(denoise)

    print(f"noise reduction: {report.noise_reduction_pct:.1f}%")
    print(f"restored field vs truth: {report.relative_mse_pct:.3f}% relative MSE")
    print(f"arrows before/after: {OUT / 'quiver.svg'}")
    print(f"measurement level sets: {OUT / 'contour_m1.svg'}, {OUT / 'contour_m2.svg'}")


if __name__ == "__main__":
    main()
