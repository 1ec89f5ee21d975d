"""MFIN model, loss, training and search"""
