# Package marker for dpqca.
