from nengo.exceptions import ValidationError
from nengo.params import (  # noqa: F401
    BoolParam,
    IntParam,
    is_param,
    NumberParam,
    Parameter,
    StringParam,
    Unconfigurable,
)


class ListParam(Parameter):
    """A non-empty list whose items all have type ``item``."""

    def __init__(self, name, default=Unconfigurable, item=str,
                 optional=False, readonly=None):
        self.item = item
        super(ListParam, self).__init__(
            name, default=default, optional=optional, readonly=readonly)

    def coerce(self, instance, lst):
        if lst is not None:
            if not isinstance(lst, list):
                raise ValidationError("Must be a list; got '%s'" % str(lst),
                                      attr=self.name, obj=instance)
            if len(lst) == 0:
                raise ValidationError("Must not be empty",
                                      attr=self.name, obj=instance)
            types = (int, float) if self.item is float else (self.item,)
            for x in lst:
                if isinstance(x, bool) or not isinstance(x, types):
                    raise ValidationError(
                        "Items must be %s; got '%s'" % (
                            self.item.__name__, str(x)),
                        attr=self.name, obj=instance)
            if self.item is float:
                lst = [float(x) for x in lst]
        return super(ListParam, self).coerce(instance, lst)


class ParamsObject(object):
    """A bag of validated parameters.

    Subclasses declare class attributes that are `nengo.params`
    descriptors; assigning a value runs the descriptor's validation.
    """

    def kwargs(self):
        args = {}
        klass = self.__class__
        for attr in dir(klass):
            if is_param(getattr(klass, attr)):
                args[attr] = getattr(self, attr)
        return args

    def update(self, **kwargs):
        for k, v in kwargs.items():
            setattr(self, k, v)
        return self

    def __setattr__(self, key, value):
        """Make sure our names are correct."""
        if not hasattr(self.__class__, key):
            raise AttributeError("'%s' has no parameter '%s'"
                                 % (self.__class__.__name__, key))
        super(ParamsObject, self).__setattr__(key, value)

    def __getstate__(self):
        """Needed for pickling."""
        # Use ParamsObject specifically in case subclass shadows it
        return ParamsObject.kwargs(self)

    def __setstate__(self, state):
        """Needed for pickling."""
        for attr, val in state.items():
            setattr(self, attr, val)

    def __repr__(self):
        return "%s(%s)" % (self.__class__.__name__, ", ".join(
            "%s=%r" % (k, v) for k, v in sorted(self.kwargs().items())))
