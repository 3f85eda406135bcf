"""Deterministic ordered parallel map used by scenario-level evaluation."""

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, degree: int = 1) -> list:
    """Apply ``fn`` to each item, returning results in input order.

    Degree 1 is a plain loop; higher degrees use a thread pool.  Output
    order, and therefore every downstream reduction, is independent of
    the degree.
    """
    items = list(items)
    if degree <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=degree) as pool:
        return list(pool.map(fn, items))
