from crashsurrogate.contact.search import radius_search, brute_force_search
from crashsurrogate.contact.block import ContactParams, ContactSet, ContactBlock, filter_and_sparsify, build_contacts, contact_residual
