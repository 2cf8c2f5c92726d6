"""Hexapod-based hydrodynamic identification: kinematics, excitation design, virtual experiments and FRM estimation."""

from .errors import HexidError
from .kinematics import HexapodGeometry, Pose, default_geometry, inverse_kinematics, forward_kinematics, leg_lengths
from .excitation import MultisineDesign, design_multisine, build_trajectory
from .plant import HydroModel, LoadCellModel, MeasurementRecord, simulate_experiment
from .sysid import identify, extract_mass_damping

__version__ = "0.1.0"
