"""Computable phenotype toolkit: a small textual language for cohort
definitions, a compiler and evaluator over an event store, ground-truth
validity metrics with stratified reporting, a synthetic patient generator,
and a versioned definition registry."""

__version__ = "0.1.0"
