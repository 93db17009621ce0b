"""dtnsim: deterministic DTN simulation and compressed-contact routing."""

__version__ = "0.1.0"

from .contacts import (Bundle, Contact, ContactKind, ContactPlan,
                       contacts_active_at, parse_contact_plan,
                       render_contact_plan, unroll_recurring_plan)
from .esp import Route, brute_force_route, esp_delivery_time, esp_route

__all__ = [
    "Bundle", "Contact", "ContactKind", "ContactPlan",
    "contacts_active_at", "parse_contact_plan", "render_contact_plan",
    "unroll_recurring_plan",
    "Route", "esp_route", "brute_force_route", "esp_delivery_time",
    "__version__",
]
