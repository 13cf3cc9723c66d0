"""Contrastive self-supervised bot detection on tabular account features."""
