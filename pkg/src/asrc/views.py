from typing import Dict, List

from sqlalchemy import text

from asrc.service_layer import unit_of_work


def runs(uow: unit_of_work.SqlAlchemyUnitOfWork) -> List[Dict]:
    with uow:
        rows = list(
            uow.session.execute(
                text(
                    "SELECT run_id, variant, seed, n_samples, n_clusters,"
                    " ami, ari FROM runs ORDER BY run_id"
                )
            )
        )
    return [
        {
            "run_id": run_id,
            "variant": variant,
            "seed": seed,
            "n_samples": n_samples,
            "n_clusters": n_clusters,
            "ami": ami,
            "ari": ari,
        }
        for run_id, variant, seed, n_samples, n_clusters, ami, ari in rows
    ]
