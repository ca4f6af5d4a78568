"""Regenerates the bundled images from scikit-image sample data.

    python3 generate.py <out dir> 96
"""
import os, sys
import numpy as np
from skimage import data, transform, io

out = sys.argv[1]
size = int(sys.argv[2])
os.makedirs(out, exist_ok=True)

def square(im):
    h, w = im.shape[:2]
    s = min(h, w)
    y, x = (h - s) // 2, (w - s) // 2
    return im[y:y + s, x:x + s]

def to8(im):
    return np.clip(np.round(im * 255), 0, 255).astype(np.uint8)

for name in ["astronaut", "coffee", "chelsea"]:
    im = square(getattr(data, name)())
    small = transform.resize(im, (size, size), anti_aliasing=True)
    io.imsave(f"{out}/{name}.png", to8(small), check_contrast=False)

halves = np.zeros((size, size, 3), np.uint8)
halves[:, : size // 2] = (230, 60, 40)
halves[:, size // 2:] = (30, 90, 200)
io.imsave(f"{out}/halves.png", halves, check_contrast=False)

with open(f"{out}/toy_labels.txt", "w") as f:
    f.write("1 1 1 1\n1 1 0 0\n2 2 2 2\n2 2 2 2\n")

rng = np.random.default_rng(7)
sources = ["rocket", "cat", "immunohistochemistry", "hubble_deep_field", "colorwheel", "retina", "astronaut", "coffee"]
crops = []
for name in sources:
    im = getattr(data, name)()[..., :3]
    h, w = im.shape[:2]
    scale = 96 / min(h, w)
    im = transform.resize(im, (round(h * scale), round(w * scale)), anti_aliasing=True)
    for _ in range(10):
        y = rng.integers(0, im.shape[0] - 32 + 1)
        x = rng.integers(0, im.shape[1] - 32 + 1)
        crops.append(to8(im[y:y + 32, x:x + 32]))
order = rng.permutation(len(crops))
for split, idx in [("train", order[:64]), ("heldout", order[64:])]:
    d = f"{out}/meta/{split}"
    os.makedirs(d, exist_ok=True)
    for i, j in enumerate(idx):
        io.imsave(f"{d}/{i:03d}.png", crops[j], check_contrast=False)
