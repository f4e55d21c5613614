import numpy as np
import pytest

from hiermerge.dataset import SyntheticSpec, generate_synthetic, split_dataset
from hiermerge.pipeline import DataSplits, PipelineConfig

TINY_SPEC = SyntheticSpec(num_types=3, items_per_type_range=(3, 4), modes_per_type=2, d_in=6,
                          samples_per_item_distribution=(0.5, 6, 20), inter_mode_separation=4.0,
                          inter_type_separation=6.0, seed=3)
TINY_CONFIG = PipelineConfig(max_iterations=2, epochs_per_stage=2, base_lr=3e-3, hidden_widths=(8,),
                             embedding_dim=4, seed=3)


@pytest.fixture(scope="session")
def tiny():
    records, hierarchy, modes = generate_synthetic(TINY_SPEC)
    split = split_dataset(records, seed=3)
    return records, hierarchy, modes, split, DataSplits.from_records(records, split)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
