from sqlalchemy import text

from asrc.domain import model


def test_run_mapper_can_load_runs(session):
    session.execute(
        text(
            "INSERT INTO runs (run_id, variant, seed, n_samples, n_clusters, ami, ari)"
            " VALUES ('aaa', 'asrc', 0, 300, 2, 0.9, 0.95),"
            " ('bbb', 'rcc', 1, 40, 4, NULL, NULL)"
        )
    )

    runs = session.query(model.Run).order_by(model.Run.run_id).all()

    assert runs == [
        model.Run("aaa", "asrc", 0, 300, 2),
        model.Run("bbb", "rcc", 1, 40, 4),
    ]
    assert runs[0].ami == 0.9
    assert runs[1].ari is None
    assert runs[0].events == []


def test_run_mapper_can_save_runs(session):
    session.add(model.Run("ccc", "asrc2", 5, 120, 3, 0.5, 0.25))
    session.commit()

    rows = list(
        session.execute(
            text(
                "SELECT run_id, variant, seed, n_samples, n_clusters, ami, ari"
                " FROM runs"
            )
        )
    )
    assert rows == [("ccc", "asrc2", 5, 120, 3, 0.5, 0.25)]
