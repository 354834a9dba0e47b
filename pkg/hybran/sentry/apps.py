from functools import partial

import sentry_sdk
from django.apps import AppConfig
from django.conf import settings
from sentry_sdk.integrations.celery import CeleryIntegration
from sentry_sdk.integrations.django import DjangoIntegration

from hybran.sentry.filters import filter_events


class SentryConfig(AppConfig):
    """Reports CLI and training-worker failures; the tool version is the release."""

    name = "hybran.sentry"

    def ready(self) -> None:
        if not settings.USE_SENTRY:
            return

        from hybrid_automaton import __version__

        sentry_sdk.init(
            dsn=settings.SENTRY_URL,
            integrations=[DjangoIntegration(), CeleryIntegration()],
            environment=settings.ENVIRONMENT,
            release=f"hybran@{__version__}",
            before_send=partial(filter_events, events_to_filter=settings.FILTER_SENTRY_EVENTS),
        )
        sentry_sdk.set_tag("training_backend", settings.HYBRAN_TRAINING_BACKEND)
