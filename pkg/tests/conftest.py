import numpy as np
import pytest
from hypothesis import settings

from tagrank.corpus import BoundingBox, ImageRecord, Instance, SentenceRecord, Vocabulary
from tagrank.trees import parse_bracketed_tree

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def sentence(bracketed: str) -> SentenceRecord:
    return SentenceRecord.from_tree(parse_bracketed_tree(bracketed))


def np_sentence(*words) -> SentenceRecord:
    """Flat noun-phrase sentence whose tokens are exactly ``words``."""
    inner = " ".join(f"(NN {w})" for w in words) or "(DT nothing)"
    return sentence(f"(NP {inner})")


def make_record(iid="img0", tags=("dog",), scene=None, sentences=(), instances=None,
                width=20, height=10, row=0) -> ImageRecord:
    if instances is None:
        instances = tuple(Instance(t, BoundingBox(0, 0, width // 2, height // 2)) for t in tags)
    return ImageRecord(iid, width, height, tuple(tags), scene, tuple(instances), tuple(sentences), row)


@pytest.fixture
def vocab():
    return Vocabulary(("person", "dog", "bicycle", "surfboard"), ("beach", "street"))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
