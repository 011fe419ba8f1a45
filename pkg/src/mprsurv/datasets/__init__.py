"""Bundled example data."""

from importlib import resources

from ..data import Dataset, parse_dataset

LUNG_SYNTHETIC = "lung_synthetic.csv"


def lung_synthetic_text() -> str:
    return resources.files(__name__).joinpath(LUNG_SYNTHETIC).read_text(encoding="utf-8")


def load_lung_synthetic() -> Dataset:
    """Synthetic 855-subject cohort with nine categorical covariates and ~22% censoring.

    Generated by :func:`mprsurv.sim.simulate_lung_like` with its default
    seed; empty cells are read as the level ``"Missing"``.
    """
    return parse_dataset(lung_synthetic_text(), "time", "status")
