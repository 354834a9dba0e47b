from django.apps import AppConfig


class HybridAutomatonConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "hybrid_automaton"
    verbose_name = "Neural-network hybrid automata"
