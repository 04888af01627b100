"""Control-adapted quantum noise spectroscopy for digitally controlled qubits.

The package is organised in layers:

``algebra``
    Pauli strings, dense operators and process-matrix conversions.
``noise_models``
    Random telegraph noise, nested-bracket correlators and CA spectra.
``digital_control``
    Window grids, digital controls and toggled error operators.
``dyson_engine``
    Control tensors and truncated Dyson expectations.
``symmetry_engine``
    Binding, dark and swap symmetries and learnable-set counting.
``qns_protocols``
    Protocol design, design matrices and reconstruction.
``trajectory_sim``
    Monte Carlo ground truth for noisy dynamics.
``control_optimizer``
    Process-matrix prediction and Nelder-Mead gate tailoring.
``cli``
    Command-line workflows with file-based input and output.
"""

import importlib

_EXPORTS = {
    "pauli_matrix": "algebra",
    "pauli_product": "algebra",
    "conjugation_factor": "algebra",
    "ptm_to_chi": "algebra",
    "process_fidelity": "algebra",
    "WindowGrid": "digital_control",
    "DigitalControl": "digital_control",
    "NoiseModel": "noise_models",
    "SpectrumIndex": "noise_models",
    "SpectrumTable": "noise_models",
}

__version__ = "0.1.0"

__all__ = list(_EXPORTS)


def __getattr__(name):
    # lazy so that the command line can size thread pools before numpy loads
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
