"""Spectral seriation of binary datasets for matrix product state Born machines."""

from .born_machine import MPSModel, TrainConfig, init_random_mps, kl_empirical, nll, train
from .dataset import BitDataset, IsingTree, gen_bas, gen_ising_tree, gen_markov_chain, permute_dataset
from .mi_graph import LapSpectrum, empirical_pairwise_mi, exact_pairwise_mi, laplacian, laplacian_spectrum
from .seriation import Ordering, brute_force_order, fiedler_order, perm_cost, seriate

__version__ = "0.1.0"
