import pytest

from dgem.corpus import UserSequence

# Four users, one strictly increasing clock each; timestamps are made up,
# only their order matters.
FOUR_USERS = {
    "user1": "ACEF",
    "user2": "BCD",
    "user3": "ADFE",
    "user4": "BFCE",
}


def four_user_sequences():
    seqs = []
    for k, (user, items) in enumerate(FOUR_USERS.items()):
        seqs.append(UserSequence(user, [(it, 10 * (i + 1) + k) for i, it in enumerate(items)]))
    return seqs


@pytest.fixture
def four_users():
    return four_user_sequences()


_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = _CRITERIA.get(num, (text, "PASS"))[1]
        status = "PASS" if rep.outcome == "passed" and prev == "PASS" else "FAIL"
        if rep.outcome == "skipped":
            status = "SKIP"
        _CRITERIA[num] = (text, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        text, status = _CRITERIA[num]
        terminalreporter.write_line(f"[{status}] criterion {num:>2}: {text}")


# Small enough for a pipeline run in a couple of seconds.
TINY = {
    "seed": 3,
    "data": {"min_activity": 2,
             "synth": {"n_users": 120, "n_items": 40, "n_clusters": 4, "events_per_user": 10,
                       "noise": 0.1, "n_solitary": 3}},
    "walk": {"length": 6, "per_vertex": 4},
    "embed": {"dim": 8, "window": 3, "epochs": 2},
    "rank": {"hidden": [8], "attention_hidden": 4, "epochs": 2, "batch_size": 64},
}


@pytest.fixture
def tiny():
    import copy
    return copy.deepcopy(TINY)
