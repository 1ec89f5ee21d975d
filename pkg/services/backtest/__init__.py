"""Expanding-window backtests and reports"""
