import sys
from pathlib import Path

import pytest

# oracle.py / instances.py live next to the tests, outside the package
sys.path.insert(0, str(Path(__file__).parent))

from usbench.ingest import parse_dataset  # noqa: E402


@pytest.fixture
def toy_dataset():
    """One image, two categories, three ground truths (one crowd)."""
    doc = {
        "dataset_id": "toy",
        "images": [{"id": 1, "width": 640, "height": 480}],
        "categories": [{"id": 1, "name": "widget"}, {"id": 2, "name": "gadget"}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 10, 50, 50]},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [200, 200, 80, 40]},
            {
                "id": 3,
                "image_id": 1,
                "category_id": 2,
                "bbox": [300, 100, 120, 120],
                "iscrowd": 1,
            },
        ],
    }
    return parse_dataset(doc)
