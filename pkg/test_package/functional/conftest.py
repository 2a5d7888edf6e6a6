import pytest


@pytest.fixture(scope="module")
def script_loc(request):
    """Return the directory holding the worked example files"""

    # uses .join instead of .dirname, so we get a LocalPath object instead of
    # a string. LocalPath.join calls normpath for us when joining the path
    return request.fspath.join("..").join("worked_example")
