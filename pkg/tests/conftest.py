import numpy as np
import pytest

from patchweave.image import NoiseSpec, add_gaussian_noise


def piecewise_image(n: int = 64) -> np.ndarray:
    """Flat regions with straight and curved edges."""
    y, x = np.mgrid[:n, :n]
    img = np.full((n, n), 60.0)
    img[8:40, 10:50] = 160.0
    img[(y - 44) ** 2 + (x - 40) ** 2 <= 225] = 220.0
    img[44:60, 4:24] = 110.0
    return img


def stripes(n: int = 64, period: int = 8, amplitude: float = 100.0) -> np.ndarray:
    col = np.arange(n)
    row = np.where((col % period) < period // 2, amplitude, 0.0)
    return np.tile(row, (n, 1))


def degrade(clean: np.ndarray, hole: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Noise on the known set, 8-bit quantization, hole painted white."""
    noisy = add_gaussian_noise(clean, NoiseSpec(sigma, seed), ~hole)
    noisy = np.clip(np.rint(noisy), 0, 255)
    return np.where(hole, 255.0, noisy)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Collect the criterion lines printed by the acceptance tests."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when == "call" and "test_acceptance" in rep.nodeid:
                lines += [l for l in rep.capstdout.splitlines() if l.startswith("criterion ")]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
