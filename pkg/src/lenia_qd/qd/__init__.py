"""Genotype variation and the two archive types."""
from ..genotype import GenomeLayout, Genotype
from .archive import (
    AddOutcome,
    DescriptorKind,
    DescriptorSpec,
    EmptyArchive,
    Individual,
    MissingCrops,
    select_uniform,
)
from .grid import MapElitesGrid, grid_cell, grid_index, resolution_for, try_add_grid
from .unstructured import (
    UnstructuredRepertoire,
    bootstrap_threshold,
    reencode_repertoire,
    try_add_unstructured,
)
from .variation import VariationParams, init_population, iso_line_dd

__all__ = [
    "AddOutcome", "DescriptorKind", "DescriptorSpec", "EmptyArchive", "GenomeLayout", "Genotype",
    "Individual", "MapElitesGrid", "MissingCrops", "UnstructuredRepertoire", "VariationParams",
    "bootstrap_threshold", "grid_cell", "grid_index", "init_population", "iso_line_dd",
    "reencode_repertoire", "resolution_for", "select_uniform", "try_add_grid", "try_add_unstructured",
]
