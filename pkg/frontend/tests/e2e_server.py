"""App factory for the frontend end-to-end tests: one small synthetic dataset."""

from teachkit.service import ServiceRegistry, create_app
from teachkit.session import PreparedDataset
from teachkit.simulator import make_gaussian_mixture


def make_app():
    registry = ServiceRegistry()
    data = make_gaussian_mixture(
        n_classes=3, per_class=25, dims=4, spread=8.0, seed=0, name="e2e"
    )
    registry.add_dataset(PreparedDataset.prepare(data, gamma=0.1, pca_dim=None))
    return create_app(registry)
