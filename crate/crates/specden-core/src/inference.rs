//! Permutation tests and confidence bands (placeholder).
