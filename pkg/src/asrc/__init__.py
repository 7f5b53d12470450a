import os

# BLAS and OpenMP pools read these once, when numpy first loads
_threads = os.environ.get("ASRC_THREADS", "").strip()
if _threads.isdigit() and int(_threads) > 0:
    for _name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_name, _threads)
