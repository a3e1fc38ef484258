"""Figure rendering for experiment and fit outputs."""
