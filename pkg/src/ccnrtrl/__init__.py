"""Exact online recurrent learning for columnar and staged LSTM networks."""
