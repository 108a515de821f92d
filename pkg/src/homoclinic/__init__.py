"""Homoclinic solutions of u'' - L(t) u + W_u(t, u) = 0 by linking minimax."""
