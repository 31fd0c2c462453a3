import os

import torch

# Bit-reproducible single-threaded mode unless explicitly raised.
torch.set_num_threads(int(os.environ.get("HGDM_THREADS", "1")))
torch.set_default_dtype(torch.float64)
