"""Reproducible synthetic training/evaluation sets used by the test suite and CLI."""

import numpy as np

from .lightspace import LightBinGrid, bin_sample, sample_bin_lights
from .render import SceneSpec, render_dataset


def scene_specs(n_scenes, seed, size=32, noise_sigma=0.01, specular=0.4, shininess=30.0,
                cast_shadows=True):
    """Alternate spheres and bump fields; every other pair is glossy.

    Scene ``i`` is Lambertian when ``i % 4 < 2`` and Blinn-Phong otherwise,
    so any 4 consecutive scenes cover both shapes and both materials.
    """
    rng = np.random.default_rng([seed, 101])
    specs = []
    for i in range(n_scenes):
        shape = "sphere" if i % 2 == 0 else "bumps"
        glossy = i % 4 >= 2
        albedo = rng.uniform(0.4, 0.9, size=3)
        specs.append(SceneSpec(
            shape=shape, height=size, width=size, albedo=albedo,
            specular=specular if glossy else 0.0, shininess=shininess,
            noise_sigma=noise_sigma, cast_shadows=cast_shadows and shape == "bumps",
            seed=int(rng.integers(2**31)),
        ))
    return specs


def make_scenes(grid, n_scenes, seed, jitter=0.5, **spec_kw):
    """Render ``n_scenes`` scenes, each lit once per bin, and bin them."""
    out = []
    for i, spec in enumerate(scene_specs(n_scenes, seed, **spec_kw)):
        lights = sample_bin_lights(grid, np.random.default_rng([seed, i, 202]), jitter=jitter)
        sample = render_dataset(spec, lights, name=f"scene_{i:03d}")
        out.append(bin_sample(sample, grid))
    return out


def scenario_s1(seed=0):
    """12 bins (4 x 3), 8 mixed Lambertian / Blinn-Phong scenes, noise 0.01."""
    grid = LightBinGrid(4, 3)
    return grid, make_scenes(grid, 8, seed)


def scenario_s2(seed=0):
    """48 bins (8 x 6), 12 mixed scenes, noise 0.01."""
    grid = LightBinGrid(8, 6)
    return grid, make_scenes(grid, 12, seed)
