"""Turn a module of decorated functions into a pipeline manifest.

Each decorated function ships as an external artifact: the source bytes of
its module plus a content digest.  The emitted entrypoint re-enters the
runner shim inside the sandbox, which bridges CBUF files to the function.
"""

import base64
import hashlib
import importlib.util
import inspect
import os
import warnings


class CollectError(ValueError):
    pass


class DuplicateModel(CollectError):
    pass


class MissingEnv(CollectError):
    pass


def load_module(module_path):
    module_path = os.fspath(module_path)
    spec = importlib.util.spec_from_file_location(
        "_planforge_user_" + hashlib.sha256(
            module_path.encode()).hexdigest()[:12], module_path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def decorated_models(module):
    """Decorated functions in definition order."""
    out = []
    for name, value in vars(module).items():
        if callable(value) and getattr(value, "_planforge_model", False):
            out.append(value)
    return out


def _inputs_of(fn):
    from . import Model
    refs = []
    for param in inspect.signature(fn).parameters.values():
        if not isinstance(param.default, Model):
            raise CollectError(
                f"{fn.__name__}: parameter {param.name!r} must default "
                f"to a Model(...) reference")
        refs.append(param.default)
    if not refs:
        raise CollectError(f"{fn.__name__} declares no inputs")
    return refs


def collect_project(module_path) -> dict:
    """Build the manifest document for one module of decorated functions."""
    module_path = os.fspath(module_path)
    module = load_module(module_path)
    functions = decorated_models(module)
    if not functions:
        warnings.warn(f"no decorated models found in {module_path}",
                      stacklevel=2)
        return {"project": os.path.basename(module_path), "models": []}

    source = open(module_path, "rb").read()
    artifact_name = os.path.basename(module_path)
    artifact = {
        "name": artifact_name,
        "content_b64": base64.b64encode(source).decode("ascii"),
        "sha256": hashlib.sha256(source).hexdigest(),
    }

    models = []
    seen = set()
    for fn in functions:
        name = fn.__name__
        if name in seen:
            raise DuplicateModel(f"duplicate model name {name!r}")
        seen.add(name)
        deco = fn._planforge
        if not deco.has_env:
            raise MissingEnv(f"model {name!r} lacks a @python(...) declaration")
        inputs = []
        for ref in _inputs_of(fn):
            entry = {"table": ref.name}
            if ref.columns is not None:
                entry["columns"] = list(ref.columns)
            if ref.filter is not None:
                entry["filter"] = ref.filter
            inputs.append(entry)
        doc = {
            "name": name,
            "inputs": inputs,
            "kind": {"external": {
                "entrypoint": ["{python}", "-m", "planforge_sdk.shim",
                               "{artifact}", name],
                "artifact": artifact,
            }},
            "env": {"interpreter": deco.interpreter,
                    "packages": dict(deco.packages)},
            "materialize": deco.materialize,
        }
        if deco.memory_limit_bytes is not None:
            doc["memory_limit_bytes"] = deco.memory_limit_bytes
        models.append(doc)
    return {"project": os.path.splitext(artifact_name)[0], "models": models}
