import numpy as np
import pytest

import driftdetect as dd
from driftdetect.calibrate import mixing_matrix

# Mortality-study configuration: sigma1=0.03, sigma2=0.02, rho=0.33,
# r=(sigma1, sigma2), lambda=c=0.1, atom 0.1.
STUDY = {
    "sigma1": 0.03,
    "sigma2": 0.02,
    "rho": 0.33,
    "rate": 0.1,
    "c": 0.1,
    "atom": 0.1,
}


@pytest.fixture(scope="session")
def study_model() -> dd.ModelSpec:
    sigma = mixing_matrix(STUDY["sigma1"], STUDY["sigma2"], STUDY["rho"])
    return dd.ModelSpec(dim=2, sigma=sigma, drift_r=[STUDY["sigma1"], STUDY["sigma2"]])


@pytest.fixture(scope="session")
def study_prior() -> dd.PriorSpec:
    return dd.PriorSpec(atom_x=STUDY["atom"], rate=STUDY["rate"])


@pytest.fixture(scope="session")
def study_cost() -> dd.CostSpec:
    return dd.CostSpec(c=STUDY["c"])


@pytest.fixture(scope="session")
def study_tilt(study_model) -> dd.TiltSolution:
    return dd.solve_tilt(study_model)


@pytest.fixture(scope="session")
def study_B(study_model, study_tilt) -> float:
    return dd.effective_diffusion(study_model, study_tilt)


@pytest.fixture(scope="session")
def study_threshold(study_B) -> dd.ThresholdSolution:
    return dd.solve_threshold(study_B, STUDY["rate"], STUDY["c"])


@pytest.fixture(scope="session")
def jump_model() -> dd.ModelSpec:
    return dd.ModelSpec(
        dim=2,
        sigma=np.array([[0.6, 0.0], [0.25, 0.5]]),
        drift_r=[0.35, 0.3],
        jumps=dd.JumpSpec(intensity_pre=0.7, jump_means_pre=[0.4, 0.25]),
    )


@pytest.fixture(scope="session")
def jump_tilt(jump_model) -> dd.TiltSolution:
    return dd.solve_tilt(jump_model)


@pytest.fixture(scope="session")
def study_config_dict() -> dict:
    return {"prior": {"x0": STUDY["atom"], "lambda": STUDY["rate"]}, "cost": {"c": STUDY["c"]}}
