# Marks 'api' as a package; the ASGI entry point is 'api.main:app'.
