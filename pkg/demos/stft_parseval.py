# %% [markdown]
# Short-time Fourier transform of a Gaussian
#
# The transform of exp(-x^2/2) against the same window has a closed form;
# compare it on the grid and check that the squared norm factorises.

# %%
import numpy as np

from semifio.grid import Grid, WavefunctionGrid
from semifio.stft import gaussian_window, stft

grid = Grid.uniform(-8.0, 8.0, 512)
x = grid.coords()[0]
f = WavefunctionGrid(grid, np.exp(-x ** 2 / 2), 1.0)
res = stft(f, gaussian_window(1.0))

y, eta = res.y[:, 0][:, None], res.eta[:, 0][None, :]
exact = 2 ** -0.5 * np.exp(-y ** 2 / 4 - eta ** 2 / 4 - 0.5j * eta * y)
print("max deviation from closed form:", np.max(np.abs(res.values - exact)))

# %%
# ||V_g f||^2 against ||f||^2 ||g||^2, with ||g||^2 = sqrt(pi)
print("norm ratio - 1:", res.norm() ** 2 / (f.norm() ** 2 * np.sqrt(np.pi)) - 1)
