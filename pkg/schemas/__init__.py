"""Schemas package"""