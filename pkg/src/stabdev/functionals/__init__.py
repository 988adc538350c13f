"""Geometric score functionals of point configurations."""
from .core import FAMILIES, FunctionalSpec, FunctionalValueVector, dilate, evaluate, rescale_evaluate
from .graphs import UnionFind, knn_edge_functional, knn_edges, knn_neighbors, nn_distances, sig_edges, sig_functional
from .packing import birth_growth_accept, rsa_accept
from .phi import Phi
from .voronoi import voronoi_cell_functional, voronoi_cells

__all__ = [
    "FAMILIES",
    "FunctionalSpec",
    "FunctionalValueVector",
    "Phi",
    "UnionFind",
    "birth_growth_accept",
    "dilate",
    "evaluate",
    "knn_edge_functional",
    "knn_edges",
    "knn_neighbors",
    "nn_distances",
    "rescale_evaluate",
    "rsa_accept",
    "sig_edges",
    "sig_functional",
    "voronoi_cell_functional",
    "voronoi_cells",
]
