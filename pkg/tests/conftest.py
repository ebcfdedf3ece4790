"""Shared test helpers: weight perturbation for gradient checks, a
rendered-digit IDX fixture used when no real MNIST files are present,
the locator for user-provided MNIST, and the acceptance verdict board."""

import os

import numpy as np

from bcvnn.layers import ComplexWeights

SLOT_NAMES = ("m_real", "m_imag", "bias_real", "bias_imag")

# one line per acceptance check, echoed after the run (capture-proof)
ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


def perturb_weight(weights, layer, slot, index, delta):
    """Copy of the weight list with one scalar nudged by delta."""
    w = weights[layer]
    arrays = [None if a is None else a.copy()
              for a in (w.m_real, w.m_imag, w.bias_real, w.bias_imag)]
    arrays[slot][index] += delta
    out = list(weights)
    out[layer] = ComplexWeights(*arrays)
    return out


# --- MNIST discovery -------------------------------------------------------

_MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def locate_mnist():
    """Paths to the four IDX files, or None when the corpus is absent.

    Looks in $BCVNN_MNIST_DIR, then <repo>/data/mnist. Accepts .gz
    variants since the IDX reader decompresses transparently.
    """
    default = os.path.join(os.path.dirname(__file__), os.pardir, "data", "mnist")
    root = os.environ.get("BCVNN_MNIST_DIR", default)
    found = {}
    for key, name in _MNIST_FILES.items():
        for candidate in (name, name + ".gz", name.replace("-idx", ".idx"),
                          name.replace("-idx", ".idx") + ".gz"):
            path = os.path.join(root, candidate)
            if os.path.isfile(path):
                found[key] = path
                break
        else:
            return None
    return found


# --- rendered digit corpus -------------------------------------------------


def _digit_font(size):
    import matplotlib
    from PIL import ImageFont

    path = os.path.join(os.path.dirname(matplotlib.__file__),
                        "mpl-data", "fonts", "ttf", "DejaVuSans.ttf")
    return ImageFont.truetype(path, size)


def render_digit_images(count, seed):
    """(count, 28, 28) uint8 digit glyphs with jittered pose, plus labels.

    A font-rendered stand-in corpus: same shapes, range, and task as the
    usual handwritten digits, but generated locally and deterministically.
    """
    from PIL import Image, ImageDraw

    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=count).astype(np.int64)
    fonts = {}
    images = np.zeros((count, 28, 28), dtype=np.uint8)
    for i, digit in enumerate(labels):
        size = int(rng.integers(16, 23))
        if size not in fonts:
            fonts[size] = _digit_font(size)
        font = fonts[size]
        img = Image.new("L", (28, 28), 0)
        draw = ImageDraw.Draw(img)
        box = draw.textbbox((0, 0), str(digit), font=font)
        x = (28 - (box[2] - box[0])) / 2 - box[0] + rng.uniform(-2.5, 2.5)
        y = (28 - (box[3] - box[1])) / 2 - box[1] + rng.uniform(-2.5, 2.5)
        draw.text((x, y), str(digit), fill=255, font=font)
        img = img.rotate(float(rng.uniform(-12.0, 12.0)), center=(14, 14),
                         resample=Image.BILINEAR)
        images[i] = np.asarray(img)
    return images, labels


def write_digit_corpus(directory, n_train, n_test, seed=0):
    """IDX train/test files of rendered digits; returns their paths."""
    from bcvnn.data import write_idx_images, write_idx_labels

    os.makedirs(directory, exist_ok=True)
    paths = {}
    for split, count, tag in (("train", n_train, 0), ("test", n_test, 1)):
        images, labels = render_digit_images(count, seed + tag)
        ipath = os.path.join(directory, f"{split}-images-idx3-ubyte")
        lpath = os.path.join(directory, f"{split}-labels-idx1-ubyte")
        write_idx_images(ipath, images)
        write_idx_labels(lpath, labels)
        paths[f"{split}_images"] = ipath
        paths[f"{split}_labels"] = lpath
    return paths
