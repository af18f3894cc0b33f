"""Core library: tensor engine, NSE models, data pipeline, ROUGE and training."""
