#!/usr/bin/env python3
"""
KWK - Galerkin simulator for the nonlinear absorbing acoustic (u, sigma, p) system

Thin launcher around kwk.cli_core; `kwk` is the installed console script
"""

from kwk.cli_core import main

if __name__ == "__main__":
    main()
