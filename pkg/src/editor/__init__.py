"""
Representation Editors

psi(x) = x + U^T (W x + b - U x), organised per site and layer.
"""

from src.editor.bank import EditorBank, EditorSet, Site
from src.editor.editor import EditorParams, apply_editor, init_editor, orthonormalize, param_count

__all__ = [
    "EditorBank",
    "EditorParams",
    "EditorSet",
    "Site",
    "apply_editor",
    "init_editor",
    "orthonormalize",
    "param_count",
]
