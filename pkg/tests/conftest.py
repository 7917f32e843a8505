"""Shared fixtures: the two Duffing designs are synthesized once per session."""

from dataclasses import dataclass

import numpy as np
import pytest

from incrlpv.duffing import duffing_incremental, duffing_primal, case_study_weights
from incrlpv.genplant import TrackingGenplantSpec, build_tracking_genplant
from incrlpv.models import AffinePlant
from incrlpv.realization import realize_primal
from incrlpv.synthesis import SynthesisOptions, SynthesisResult, synthesize_polytopic


@dataclass
class Design:
    mode: str
    genplant: AffinePlant
    result: SynthesisResult

    @property
    def loop_controller(self):
        """Controller placed in the nonlinear loop."""
        k = self.result.controller
        return realize_primal(k) if self.mode == "li2" else k


def _design(mode: str) -> Design:
    lpv = duffing_incremental() if mode == "li2" else duffing_primal()
    gp = build_tracking_genplant(TrackingGenplantSpec(lpv.to_affine(), case_study_weights()))
    return Design(mode, gp, synthesize_polytopic(gp, SynthesisOptions(lyapunov="x-varying")))


@pytest.fixture(scope="session")
def li2_design() -> Design:
    return _design("li2")


@pytest.fixture(scope="session")
def l2_design() -> Design:
    return _design("l2")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
