import numpy as np
import pytest

from csbmf import clustering, metrics, resync, spectral, synthgen

FS = 7000.0
W = H = 700


class Front:
    """Noise-free three-source scenario taken up to the dictionary."""

    def __init__(self, sigma=0.0):
        self.scenario = synthgen.three_source_scenario(noise_sigma=sigma)
        self.x, self.truth = self.scenario.generate()
        self.cfg = spectral.StftConfig(W, H, "rectangular", FS)
        self.Z = spectral.stft(self.x, self.cfg)
        F = clustering.extract_features(self.Z, "stft_magnitude")
        self.cr = clustering.kmeans(F, 8, seed=0)
        self.dZ, self.C_all, self.lifted = spectral.delta_stft(
            self.x, self.cr.labels, self.cfg, edge_trim=1)
        self.C, self.removed = spectral.remove_standby(self.C_all)
        ft = metrics.align_frames(self.truth, FS, self.cfg)
        self.frame_truth = ft
        # active source subset of every kept atom, from its frames' majority truth
        self.subset = []
        for i in self.C.ids:
            a, b = self.lifted.runs[i]
            lab = ft.labels[:, a:b + 1].mean(axis=1) >= 0.5
            self.subset.append(tuple(int(s) for s in np.flatnonzero(lab)))

    def atom_of(self, subset):
        return self.subset.index(tuple(subset))


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; lines are printed at the end of the run."""

    def record(number, passed, detail):
        line = f"acceptance {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])


@pytest.fixture(scope="session")
def clean():
    return Front(0.0)


@pytest.fixture(scope="session")
def clean_matrix(clean):
    # full matrix, no early exit, so that every cell's status is visible
    return resync.build_residual_matrix(clean.C, 2, cfg=resync.ResyncConfig())


@pytest.fixture(scope="session")
def toy():
    from csbmf.regcost import regularization_toy
    return regularization_toy(32)
