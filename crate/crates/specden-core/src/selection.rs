//! Smoothing-parameter selection (placeholder).
