"""Keyword-steered GAN text generation for marketplace listings.

Pipeline: stratify listings by occupancy within price-per-bedroom bins,
train GloVe vectors on the descriptions, classify popularity with an LSTM,
and train a feed-forward GAN whose generator loss rewards alignment with
user keywords.
"""

__version__ = "0.1.0"
