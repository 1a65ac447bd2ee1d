import os
import jax

# Every derivative in the pipeline is compared against tolerances far below float32 resolution
jax.config.update("jax_enable_x64", True)

version_info = (0, 1, 0)
__version__ = ".".join([str(v) for v in version_info])

OUT_DIR = os.path.abspath("nhmpc-out")
DEFAULT_SCENARIO = {
    "VEHICLE_NAME": {"value": "kinematic_car", "type": str, "section": "vehicle"},
    "VEHICLE_L": {"value": 0.2, "type": float, "section": "vehicle"},
    "VEHICLE_L1": {"value": 0.2, "type": float, "section": "vehicle"},
    "VEHICLE_L2": {"value": 0.2, "type": float, "section": "vehicle"},
    "VEHICLE_INPUT_BOUNDS": {"value": (-1.0, 1.0, -1.0, 1.0), "type": tuple, "section": "vehicle"},
    "VEHICLE_MAX_DEPTH": {"value": 6, "type": int, "section": "vehicle"},
    "SETPOINT_D": {"value": (), "type": tuple, "section": "setpoint"},
    "INITIAL_STATE_X0": {"value": (0.0, 0.2, 0.0, 0.0), "type": tuple, "section": "initial_state"},
    "COST_KIND": {"value": "tailored", "type": str, "section": "cost"},
    "COST_STATE_WEIGHTS": {"value": (), "type": tuple, "section": "cost"},
    "COST_INPUT_WEIGHTS": {"value": (), "type": tuple, "section": "cost"},
    "COST_CANCEL_GCD": {"value": True, "type": bool, "section": "cost"},
    "COST_SCALE": {"value": "auto", "type": str, "section": "cost"},
    "HORIZON_DT": {"value": 0.25, "type": float, "section": "horizon"},
    "HORIZON_STEPS": {"value": 60, "type": int, "section": "horizon"},
    "HORIZON_DURATION": {"value": 15.0, "type": float, "section": "horizon"},
    "SOLVER_MAX_ITER": {"value": 2000, "type": int, "section": "solver"},
    "SOLVER_TOLERANCE": {"value": 1e-8, "type": float, "section": "solver"},
    "SOLVER_RESTARTS": {"value": 8, "type": int, "section": "solver"},
    "SOLVER_SUBSTEPS": {"value": 4, "type": int, "section": "solver"},
    "SOLVER_WARM_START": {"value": True, "type": bool, "section": "solver"},
    "SOLVER_SEED": {"value": 0, "type": int, "section": "solver"},
    "OUTPUT_TRACE": {"value": "trace.csv", "type": str, "section": "output", "path": True},
    "OUTPUT_SUMMARY": {"value": "summary.txt", "type": str, "section": "output", "path": True},
    "OUTPUT_SVG": {"value": "trajectory.svg", "type": str, "section": "output", "path": True},
    "OUTPUT_LOG": {"value": "nhmpc.log", "type": str, "section": "output", "path": True},
    "OUTPUT_PLOT": {"value": False, "type": bool, "section": "output"},
}
