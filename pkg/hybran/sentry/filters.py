def filter_events(event: dict, hint: dict, events_to_filter: list[str]) -> dict | None:
    """Drop events whose exception type is listed, e.g. expected FragmentOverflowError."""
    try:
        event_type: str | None = event.get("exception").get("values")[0].get("type")
        if event_type in events_to_filter:
            return None
        return event
    except (IndexError, AttributeError, KeyError, TypeError):
        return event
