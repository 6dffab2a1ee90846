//! Simulation harness (placeholder).
