import numpy as np
import pytest

from hqfnn.data import write_idx


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def idx_fixture(tmp_path):
    """Eight 28x28 images: two classes, bright left half vs bright right half."""
    rng = np.random.default_rng(3)
    images = np.zeros((8, 28, 28), dtype=np.uint8)
    labels = np.array([0, 1] * 4, dtype=np.uint8)
    for i, lab in enumerate(labels):
        cols = slice(0, 14) if lab == 0 else slice(14, 28)
        images[i, :, cols] = rng.integers(150, 256, size=(28, 14))
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(images, labels, img, lab)
    return img, lab


@pytest.fixture
def csv_fixture(tmp_path):
    rng = np.random.default_rng(5)
    path = tmp_path / "feat.csv"
    lines = ["label,f0,f1,f2"]
    for i in range(24):
        lab = i % 3
        vals = rng.normal(loc=lab, scale=0.3, size=3)
        lines.append(",".join([str(lab)] + [f"{v:.5f}" for v in vals]))
    path.write_text("\n".join(lines) + "\n")
    return path


def pytest_terminal_summary(terminalreporter):
    lines = [value for reports in terminalreporter.stats.values() for rep in reports
             if getattr(rep, "when", None) == "call"
             for key, value in getattr(rep, "user_properties", ()) if key == "acceptance"]
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
