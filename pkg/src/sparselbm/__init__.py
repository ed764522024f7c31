"""2D lattice-Boltzmann (D2Q9, BGK) solver with swappable storage layouts.

The storage backend varies among four data layouts (dense, 16x16 tiles,
per-node bitmask, lazily allocated pointer tiles) behind one solver kernel;
geometry builders cover driven cavities, channels, cylinders and porous
packings; the validation suite checks against canonical references and the
benchmark harness reports LUPS/bandwidth figures.
"""

from .boundaries import (BcOutcome, bounce_back_gather, resolve_boundary,
                         zou_he_pressure, zou_he_velocity)
from .geometry import (Geometry, GeometryError, GeometryParseError,
                       PressureInlet, Provenance, VelocityInlet, add_cylinder,
                       build_cavity, build_channel, build_porous_random,
                       build_porous_regular, from_arrays, load_geometry,
                       porosity, save_geometry)
from .kernel import (DivergenceError, Simulation, max_worker_count,
                     set_worker_count)
from .lattice import (CX, CY, D2Q9, OPP, W, FlowParams, LatticeModel,
                      bgk_collide, equilibrium, moments, omega_from_viscosity,
                      opposite_direction, viscosity_from_reynolds)
from .layouts import (BoundaryValueTable, LayoutKind, NodeDescriptorField,
                      NodeType, Orientation, PdfField, active_nodes, allocate,
                      copy_bandwidth_bench, copy_bandwidth_survey)
from .metrics import (PerfReport, SweepConfig, benchmark, porosity_sweep,
                      sparse_efficiency, write_report_csv)
from .validation import (KNOWN_OUTLIERS, CenterlineProfiles, GhiaReferenceTable,
                         PoiseuilleFit, ProfileComparison, WakeClassification,
                         centerline_profiles, classify_wake, compare_to_ghia,
                         load_ghia_reference, poiseuille_fit, total_mass)

__version__ = "0.1.0"
