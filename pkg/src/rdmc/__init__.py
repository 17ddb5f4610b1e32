"""Reverse diffusion Monte Carlo: sample ``exp(-f*)`` by simulating a reversed OU process
whose scores are estimated by Monte Carlo over an explicit posterior."""

__version__ = "0.1.0"
