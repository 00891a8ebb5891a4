"""Combination, scoring and evaluation of quantile-format ensemble forecasts."""
