"""Export the MNIST subset bundled with mlxtend to IDX files.

Usage: python3 scripts/fetch_mnist.py [DEST]   (default: data/mnist)
"""

import sys

from memassoc.data import DEFAULT_MNIST_DIR, export_bundled_mnist

if __name__ == "__main__":
    dest = export_bundled_mnist(sys.argv[1] if len(sys.argv) > 1 else DEFAULT_MNIST_DIR)
    print(f"MNIST IDX files in {dest}")
